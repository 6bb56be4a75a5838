//! Generation, recommendation, editing and diffs: the operations behind the
//! HTTP API and the command line.

mod store;

pub use store::{new_id, Session, SessionTopic, Store, StoreError, StoredDashboard};

use crate::agent::NetworkParams;
use crate::chart::{
    substitute_key_column, to_render_spec, validate_chart_for_key, ChartError, ChartSpec, DashboardState,
    Substitution,
};
use crate::env::{masks_for_state, ActionDecision, EnvConfig, EnvError, Head, PreparedDataset, Selections};
use crate::insight::{InsightKind, InsightRecord};
use crate::layout::{layout, PositionedDashboard};
use crate::reward::RewardBreakdown;
use crate::train::{rollout, GeneratedDashboard, RolloutConfig, Sampling};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

/// Quotas below one full episode length only warn.
pub const MIN_QUOTA: usize = 50;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("dashboard {0:?} does not belong to this dataset")]
    ForeignDashboard(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    /// Environment steps for the whole request.
    pub quota: usize,
    /// Spend `quota` on every key column instead of sharing it.
    pub per_topic: bool,
    pub sampling: Sampling,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            quota: 1000,
            per_topic: false,
            sampling: Sampling::Stochastic,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendConfig {
    /// Exploration steps from the edited dashboard.
    pub steps: usize,
    pub top: usize,
    pub seed: u64,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            top: 5,
            seed: 0,
        }
    }
}

/// Dashboards sharing a key column, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub key_column: String,
    pub dashboards: Vec<GeneratedDashboard>,
}

impl Topic {
    pub fn best_return(&self) -> f64 {
        self.dashboards.first().map_or(f64::NEG_INFINITY, |d| d.episode_return)
    }
}

/// Groups dashboards by key column; dashboards within a topic and topics
/// themselves are ordered by return, highest first. Ties keep generation order.
pub fn group_topics(dashboards: Vec<GeneratedDashboard>) -> Vec<Topic> {
    let mut by_key: BTreeMap<String, Vec<GeneratedDashboard>> = BTreeMap::new();
    let mut first_seen = Vec::new();
    for d in dashboards {
        if !by_key.contains_key(&d.key_column) {
            first_seen.push(d.key_column.clone());
        }
        by_key.entry(d.key_column.clone()).or_default().push(d);
    }
    let mut topics: Vec<Topic> = first_seen
        .into_iter()
        .map(|k| {
            let mut dashboards = by_key.remove(&k).expect("seen");
            dashboards.sort_by(|a, b| b.episode_return.total_cmp(&a.episode_return));
            Topic {
                key_column: k,
                dashboards,
            }
        })
        .collect();
    topics.sort_by(|a, b| b.best_return().total_cmp(&a.best_return()));
    topics
}

/// Runs quota-bounded episodes with key columns rotating over the dataset
/// and returns the dashboards as ranked topics.
pub fn generate(
    params: &NetworkParams,
    data: &Arc<PreparedDataset>,
    env: &EnvConfig,
    config: &GenerateConfig,
) -> Result<Vec<Topic>, ServiceError> {
    if config.quota < MIN_QUOTA {
        tracing::warn!(quota = config.quota, "quota below one episode length; running at least one episode");
    }
    let rollout_config = RolloutConfig {
        quota: config.quota,
        sampling: config.sampling,
        seed: config.seed,
        env: *env,
    };
    let mut dashboards = Vec::new();
    if config.per_topic {
        for (i, col) in data.dataset.context_columns().iter().enumerate() {
            if !data.space.has_any(i) {
                continue;
            }
            let start = DashboardState::empty(col.name.clone());
            let cfg = RolloutConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..rollout_config
            };
            dashboards.extend(rollout(params, data, Some(&start), &cfg)?);
        }
    } else {
        dashboards = rollout(params, data, None, &rollout_config)?;
    }
    Ok(group_topics(dashboards))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub chart: ChartSpec,
    /// Score increase from adding the chart to the edited dashboard.
    pub gain: f64,
    /// Scores of the edited dashboard with the chart added.
    pub breakdown: RewardBreakdown,
    /// Insights the chart would add.
    pub new_insights: Vec<InsightRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendations {
    pub items: Vec<Recommendation>,
    /// Why the list is empty, when it is.
    pub explanation: Option<String>,
}

/// Explores from `edited` and ranks the charts the agent tried to add by the
/// score they add to `edited` itself. Charts already present or keyed on
/// another column are skipped; duplicates are merged.
pub fn recommend(
    params: &NetworkParams,
    data: &Arc<PreparedDataset>,
    env: &EnvConfig,
    edited: &DashboardState,
    config: &RecommendConfig,
) -> Result<Recommendations, ServiceError> {
    let n_max = env.reward.n_max;
    if edited.charts.len() >= n_max {
        return Ok(Recommendations {
            items: Vec::new(),
            explanation: Some(format!("the dashboard already holds the maximum of {n_max} charts")),
        });
    }
    let rollout_config = RolloutConfig {
        quota: config.steps,
        sampling: Sampling::Stochastic,
        seed: config.seed,
        env: *env,
    };
    let episodes = rollout(params, data, Some(edited), &rollout_config)?;
    let (base, base_insights) = data.score(edited, &env.reward)?;
    let base_keys: BTreeSet<_> = base_insights.iter().map(|r| r.key()).collect();
    let mut seen: Vec<&ChartSpec> = Vec::new();
    let mut items = Vec::new();
    for chart in episodes.iter().flat_map(|e| &e.added) {
        if edited.charts.contains(chart) || seen.contains(&chart) {
            continue;
        }
        seen.push(chart);
        if !validate_chart_for_key(chart, &edited.key_column, &data.dataset)?.is_empty() {
            continue;
        }
        let mut next = edited.clone();
        next.charts.push(chart.clone());
        let (after, insights) = data.score(&next, &env.reward)?;
        let new_insights = insights
            .iter()
            .filter(|r| !base_keys.contains(&r.key()))
            .cloned()
            .collect();
        items.push(Recommendation {
            chart: chart.clone(),
            gain: after.cr - base.cr,
            breakdown: after,
            new_insights,
        });
    }
    // Stable: equal gains keep discovery order.
    items.sort_by(|a, b| b.gain.total_cmp(&a.gain));
    items.truncate(config.top);
    let explanation = items
        .is_empty()
        .then(|| "exploration found no chart that fits this dashboard".to_string());
    Ok(Recommendations { items, explanation })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsightKey {
    pub kind: InsightKind,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DashboardDiff {
    pub added_charts: Vec<ChartSpec>,
    pub removed_charts: Vec<ChartSpec>,
    pub gained_insights: Vec<InsightKey>,
    pub lost_insights: Vec<InsightKey>,
    /// `(from, to)` when the key columns differ.
    pub key_change: Option<(String, String)>,
}

impl DashboardDiff {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

/// Set differences of charts and insight keys from `a` to `b`.
pub fn diff_dashboards(
    data: &PreparedDataset,
    a: &DashboardState,
    b: &DashboardState,
) -> Result<DashboardDiff, ServiceError> {
    let ia = data.dashboard_insights(a)?;
    let ib = data.dashboard_insights(b)?;
    let keys = |v: &[InsightRecord]| -> BTreeSet<(InsightKind, Vec<String>)> {
        v.iter().map(|r| (r.kind, r.columns.clone())).collect()
    };
    let (ka, kb) = (keys(&ia), keys(&ib));
    let to_key = |(kind, columns): &(InsightKind, Vec<String>)| InsightKey {
        kind: *kind,
        columns: columns.clone(),
    };
    let mut added = Vec::new();
    for c in &b.charts {
        if !a.charts.contains(c) && !added.contains(c) {
            added.push(c.clone());
        }
    }
    let mut removed = Vec::new();
    for c in &a.charts {
        if !b.charts.contains(c) && !removed.contains(c) {
            removed.push(c.clone());
        }
    }
    Ok(DashboardDiff {
        added_charts: added,
        removed_charts: removed,
        gained_insights: kb.difference(&ka).map(to_key).collect(),
        lost_insights: ka.difference(&kb).map(to_key).collect(),
        key_change: (a.key_column != b.key_column).then(|| (a.key_column.clone(), b.key_column.clone())),
    })
}

/// A user edit of a dashboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    AddChart { chart: ChartSpec },
    RemoveChart { index: usize },
    ModifyChart { index: usize, chart: ChartSpec },
    ChangeKey { column: String },
}

fn check_chart(data: &PreparedDataset, key: &str, chart: &ChartSpec) -> Result<(), ServiceError> {
    let violations = validate_chart_for_key(chart, key, &data.dataset)?;
    if violations.is_empty() {
        return Ok(());
    }
    let why: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    Err(ServiceError::InvalidEdit(why.join("; ")))
}

/// Applies an edit, refusing anything that would leave an invalid dashboard.
pub fn apply_edit(
    data: &PreparedDataset,
    state: &DashboardState,
    edit: &Edit,
    n_max: usize,
) -> Result<DashboardState, ServiceError> {
    let mut next = state.clone();
    match edit {
        Edit::AddChart { chart } => {
            if state.charts.len() >= n_max {
                return Err(ServiceError::InvalidEdit(format!("dashboard already has {n_max} charts")));
            }
            check_chart(data, &state.key_column, chart)?;
            next.charts.push(chart.clone());
        }
        Edit::RemoveChart { index } => {
            if *index >= state.charts.len() {
                return Err(ServiceError::InvalidEdit(format!("no chart at index {index}")));
            }
            next.charts.remove(*index);
        }
        Edit::ModifyChart { index, chart } => {
            if *index >= state.charts.len() {
                return Err(ServiceError::InvalidEdit(format!("no chart at index {index}")));
            }
            check_chart(data, &state.key_column, chart)?;
            next.charts[*index] = chart.clone();
        }
        Edit::ChangeKey { column } => match substitute_key_column(state, column, &data.dataset)? {
            Substitution::Applied(s) => next = s,
            Substitution::Refused { failing_charts } => {
                return Err(ServiceError::InvalidEdit(format!(
                    "charts {failing_charts:?} cannot be keyed on {column:?}"
                )))
            }
        },
    }
    Ok(next)
}

/// Everything the canvas needs to draw a dashboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardView {
    pub state: DashboardState,
    pub layout: PositionedDashboard,
    pub render_specs: Vec<serde_json::Value>,
    pub breakdown: RewardBreakdown,
    pub insights: Vec<InsightRecord>,
}

pub fn dashboard_view(
    data: &PreparedDataset,
    state: &DashboardState,
    env: &EnvConfig,
    dataset_ref: &str,
) -> Result<DashboardView, ServiceError> {
    let (breakdown, insights) = data.score(state, &env.reward)?;
    Ok(DashboardView {
        layout: layout(state, &insights, &data.dataset)?,
        render_specs: state
            .charts
            .iter()
            .map(|c| to_render_spec(c, &data.dataset, dataset_ref))
            .collect(),
        state: state.clone(),
        breakdown,
        insights,
    })
}

/// Options of one add head for the chart editor, given the choices made for
/// the heads before it (`add` selections in head order: mark, y field, y
/// aggregate, key aggregate, color).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadOptions {
    pub head: String,
    pub options: Vec<bool>,
    /// Display name of every option, same length as `options`.
    pub labels: Vec<String>,
}

fn head_labels(data: &PreparedDataset, head: Head, width: usize) -> Vec<String> {
    let columns = || data.dataset.context_columns().iter().map(|c| c.name.clone());
    let mut labels: Vec<String> = match head {
        Head::Action => ["change", "add", "remove", "terminate"].map(String::from).to_vec(),
        Head::Mark => crate::chart::Mark::ALL.iter().map(|m| m.name().to_string()).collect(),
        Head::YAggregate | Head::KeyAggregate => {
            crate::chart::Aggregate::ALL.iter().map(|a| a.name().to_string()).collect()
        }
        Head::Limit => ["none", "top", "bottom"].map(String::from).to_vec(),
        Head::ColorField => std::iter::once("none".to_string()).chain(columns()).collect(),
        Head::YField | Head::KeyColumn => columns().collect(),
        Head::RemoveIndex => (0..width).map(|i| format!("chart {i}")).collect(),
    };
    labels.resize(width, String::new());
    labels
}

pub fn editor_options(
    data: &Arc<PreparedDataset>,
    state: &DashboardState,
    env: &EnvConfig,
    prefix: &[usize],
) -> Result<Vec<HeadOptions>, ServiceError> {
    let masks = masks_for_state(data, state, env);
    let mut sel: Selections = [None; crate::env::NUM_HEADS];
    sel[Head::Action.index()] = Some(crate::env::ActionKind::Add.index());
    let mut out = vec![HeadOptions {
        head: Head::Action.name().into(),
        labels: head_labels(data, Head::Action, masks.action.len()),
        options: masks.action.clone(),
    }];
    if !masks.action[crate::env::ActionKind::Add.index()] {
        return Ok(out);
    }
    for (i, head) in crate::env::ADD_HEADS.iter().enumerate() {
        let options = masks.mask(*head, &sel);
        out.push(HeadOptions {
            head: head.name().into(),
            labels: head_labels(data, *head, options.len()),
            options: options.clone(),
        });
        match prefix.get(i) {
            Some(&c) if options.get(c) == Some(&true) => sel[head.index()] = Some(c),
            Some(&c) => {
                return Err(ServiceError::InvalidEdit(format!("option {c} is not available for {}", head.name())))
            }
            None => break,
        }
    }
    Ok(out)
}

/// The chart an add decision built from editor selections would produce.
pub fn chart_from_selections(
    data: &PreparedDataset,
    state: &DashboardState,
    selections: [usize; 6],
) -> Option<ChartSpec> {
    let key = data.context_index(&state.key_column)?;
    let decision = ActionDecision::add(crate::env::AddTuple::from_indices(selections));
    crate::env::build_chart(&data.dataset, key, &decision.add_tuple()?)
}
