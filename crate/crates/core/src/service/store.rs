//! Directory-backed persistence for datasets, generated dashboards and
//! sessions. Every record is a JSON file written atomically (temp file, then
//! rename), so a restart sees either the old or the new version.

use super::{Edit, Topic};
use crate::chart::DashboardState;
use crate::data::{load_dataset, DataError, Dataset};
use crate::train::GeneratedDashboard;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("invalid id {0:?}")]
    InvalidId(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDashboard {
    pub id: String,
    pub dataset_id: String,
    pub generated: GeneratedDashboard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTopic {
    pub key_column: String,
    /// Ids of stored dashboards, best first.
    pub dashboard_ids: Vec<String>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub dataset_id: String,
    pub state: DashboardState,
    /// Edits in the order they were applied.
    pub history: Vec<Edit>,
    pub topics: Vec<SessionTopic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetMeta {
    id: String,
    name: String,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn check_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in ["datasets", "dashboards", "sessions", "topics"] {
            fs::create_dir_all(root.join(dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, dir: &str, id: &str, ext: &str) -> Result<PathBuf, StoreError> {
        check_id(id)?;
        Ok(self.root.join(dir).join(format!("{id}.{ext}")))
    }

    fn put_json(&self, dir: &str, id: &str, value: &impl Serialize) -> Result<(), StoreError> {
        write_atomic(&self.path(dir, id, "json")?, &serde_json::to_vec_pretty(value)?)
    }

    fn get_json<T: DeserializeOwned>(&self, dir: &str, kind: &'static str, id: &str) -> Result<T, StoreError> {
        let path = self.path(dir, id, "json")?;
        match fs::read(&path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StoreError::NotFound {
                kind,
                id: id.to_string(),
            }),
            Err(e) => Err(e.into()),
        }
    }

    fn ids(&self, dir: &str) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join(dir))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    out.push(stem.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Parses and stores an uploaded CSV under a fresh id.
    pub fn add_dataset(&self, name: &str, csv: &[u8]) -> Result<(String, Dataset), StoreError> {
        let dataset = load_dataset(csv, name)?;
        let id = new_id();
        write_atomic(&self.path("datasets", &id, "csv")?, csv)?;
        self.put_json(
            "datasets",
            &id,
            &DatasetMeta {
                id: id.clone(),
                name: name.to_string(),
            },
        )?;
        Ok((id, dataset))
    }

    pub fn dataset(&self, id: &str) -> Result<Dataset, StoreError> {
        let meta: DatasetMeta = self.get_json("datasets", "dataset", id)?;
        let csv = fs::read(self.path("datasets", id, "csv")?)?;
        Ok(load_dataset(csv.as_slice(), &meta.name)?)
    }

    pub fn dataset_csv(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        let _: DatasetMeta = self.get_json("datasets", "dataset", id)?;
        Ok(fs::read(self.path("datasets", id, "csv")?)?)
    }

    pub fn dataset_ids(&self) -> Result<Vec<String>, StoreError> {
        self.ids("datasets")
    }

    /// Stores every dashboard of `topics` and the topic list of the dataset,
    /// replacing any earlier list.
    pub fn put_topics(&self, dataset_id: &str, topics: &[Topic]) -> Result<Vec<SessionTopic>, StoreError> {
        let mut out = Vec::new();
        for t in topics {
            let mut ids = Vec::new();
            for d in &t.dashboards {
                let id = new_id();
                self.put_dashboard(&StoredDashboard {
                    id: id.clone(),
                    dataset_id: dataset_id.to_string(),
                    generated: d.clone(),
                })?;
                ids.push(id);
            }
            out.push(SessionTopic {
                key_column: t.key_column.clone(),
                dashboard_ids: ids,
                returns: t.dashboards.iter().map(|d| d.episode_return).collect(),
            });
        }
        self.put_json("topics", dataset_id, &out)?;
        Ok(out)
    }

    pub fn topics(&self, dataset_id: &str) -> Result<Vec<SessionTopic>, StoreError> {
        self.get_json("topics", "topics for dataset", dataset_id)
    }

    pub fn put_dashboard(&self, d: &StoredDashboard) -> Result<(), StoreError> {
        self.put_json("dashboards", &d.id, d)
    }

    pub fn dashboard(&self, id: &str) -> Result<StoredDashboard, StoreError> {
        self.get_json("dashboards", "dashboard", id)
    }

    pub fn put_session(&self, s: &Session) -> Result<(), StoreError> {
        self.put_json("sessions", &s.id, s)
    }

    pub fn session(&self, id: &str) -> Result<Session, StoreError> {
        self.get_json("sessions", "session", id)
    }

    pub fn session_ids(&self) -> Result<Vec<String>, StoreError> {
        self.ids("sessions")
    }
}
