//! Tabular data: loading, typing and column features.

mod cell;
mod features;
mod load;

pub use cell::Cell;
pub use features::{
    compute_column_features, compute_field_features, series_features, ColumnFeatures,
    slot, FieldFeatures, CLIP, FEATURE_DIM,
};
pub(crate) use features::field_features_of;
pub use load::{infer_column_type, load_dataset, load_dataset_from_path, parse_date, DataError};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Maximum number of columns the encoder and the column-selecting heads can see.
pub const MAX_CONTEXT_COLUMNS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Quantitative,
    Nominal,
    Temporal,
}

impl ColumnType {
    pub fn short(self) -> &'static str {
        match self {
            ColumnType::Quantitative => "Q",
            ColumnType::Nominal => "N",
            ColumnType::Temporal => "T",
        }
    }

    /// Field type name used in render specs.
    pub fn vega_type(self) -> &'static str {
        match self {
            ColumnType::Quantitative => "quantitative",
            ColumnType::Nominal => "nominal",
            ColumnType::Temporal => "temporal",
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.vega_type())
    }
}

/// One typed dataset column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub ctype: ColumnType,
    pub values: Vec<Cell>,
    pub missing_ratio: f64,
    /// Number of distinct non-missing values.
    pub cardinality: usize,
}

impl ColumnProfile {
    /// Builds a profile from already-typed cells.
    pub fn new(name: impl Into<String>, ctype: ColumnType, values: Vec<Cell>) -> Self {
        let missing = values.iter().filter(|c| c.is_missing()).count();
        let missing_ratio = if values.is_empty() {
            0.0
        } else {
            missing as f64 / values.len() as f64
        };
        let cardinality = values
            .iter()
            .filter(|c| !c.is_missing())
            .collect::<BTreeSet<_>>()
            .len();
        Self {
            name: name.into(),
            ctype,
            values,
            missing_ratio,
            cardinality,
        }
    }

    /// Types raw text with [`infer_column_type`] and parses each cell accordingly.
    pub fn from_raw<S: AsRef<str>>(name: impl Into<String>, raw: &[S]) -> Self {
        let ctype = infer_column_type(raw);
        let values = raw.iter().map(|s| Cell::parse_as(s.as_ref(), ctype)).collect();
        Self::new(name, ctype, values)
    }

    pub fn numeric_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().filter_map(Cell::as_f64)
    }
}

/// Summary of a column without its values, used for persistence and API responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub ctype: ColumnType,
    pub missing_ratio: f64,
    pub cardinality: usize,
    pub features: ColumnFeatures,
}

/// An immutable, loaded table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub columns: Vec<ColumnProfile>,
    pub row_count: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnProfile>) -> Self {
        let row_count = columns.first().map_or(0, |c| c.values.len());
        debug_assert!(columns.iter().all(|c| c.values.len() == row_count));
        Self {
            name: name.into(),
            columns,
            row_count,
        }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnProfile> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// True when the dataset has more columns than the encoder context holds;
    /// columns past [`MAX_CONTEXT_COLUMNS`] are invisible to the agent.
    pub fn is_truncated(&self) -> bool {
        self.columns.len() > MAX_CONTEXT_COLUMNS
    }

    /// Columns the agent can address, in dataset order.
    pub fn context_columns(&self) -> &[ColumnProfile] {
        &self.columns[..self.columns.len().min(MAX_CONTEXT_COLUMNS)]
    }

    pub fn summaries(&self) -> Vec<ColumnSummary> {
        self.columns
            .iter()
            .map(|c| ColumnSummary {
                name: c.name.clone(),
                ctype: c.ctype,
                missing_ratio: c.missing_ratio,
                cardinality: c.cardinality,
                features: compute_column_features(c),
            })
            .collect()
    }
}
