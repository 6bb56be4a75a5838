//! The dashboard-construction decision process.
//!
//! A state is a [`DashboardState`]. Each step the agent picks one of
//! change / add / remove / terminate and fills the parameter heads that action
//! uses, in [`Head::ALL`] order:
//!
//! * change: `KeyColumn` (the new key).
//! * add: `Mark`, `YField`, `YAggregate`, `KeyAggregate`, `ColorField`, `Limit`.
//! * remove: `RemoveIndex`.
//! * terminate: nothing.
//!
//! Masks for the add heads are prefix projections of the precomputed set of
//! valid add tuples for the current key, so every completed tuple is a valid
//! chart. The reward of a step is the change in the dashboard's combined score.

mod space;
mod trace;

pub use space::{build_chart, tuple_for_chart, ActionSpace, AddTuple, LimitChoice};
pub use trace::{read_trace, write_trace, TraceRecord};

use crate::chart::{substitute_key_column, Aggregate, ChartError, DashboardState, Mark, Substitution};
use crate::data::{Dataset, MAX_CONTEXT_COLUMNS};
use crate::encode::DashboardEncoder;
use crate::insight::{combine_chart_insights, detect_chart_insights, InsightConfig, InsightRecord};
use crate::reward::{score_from_insights, RewardBreakdown, RewardConfig};
use crate::chart::ChartSpec;
use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub const MAX_STEPS: usize = 50;
pub const NUM_HEADS: usize = 9;
/// Add heads, in sampling order. Their selections form an [`AddTuple`].
pub const ADD_HEADS: [Head; 6] = [
    Head::Mark,
    Head::YField,
    Head::YAggregate,
    Head::KeyAggregate,
    Head::ColorField,
    Head::Limit,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Change,
    Add,
    Remove,
    Terminate,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [
        ActionKind::Change,
        ActionKind::Add,
        ActionKind::Remove,
        ActionKind::Terminate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Heads that carry a selection for this action, including the action head.
    pub fn active_heads(self) -> &'static [Head] {
        match self {
            ActionKind::Change => &[Head::Action, Head::KeyColumn],
            ActionKind::Add => &[
                Head::Action,
                Head::Mark,
                Head::YField,
                Head::YAggregate,
                Head::KeyAggregate,
                Head::ColorField,
                Head::Limit,
            ],
            ActionKind::Remove => &[Head::Action, Head::RemoveIndex],
            ActionKind::Terminate => &[Head::Action],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Action,
    KeyColumn,
    RemoveIndex,
    Mark,
    YField,
    YAggregate,
    KeyAggregate,
    ColorField,
    Limit,
}

impl Head {
    pub const ALL: [Head; NUM_HEADS] = [
        Head::Action,
        Head::KeyColumn,
        Head::RemoveIndex,
        Head::Mark,
        Head::YField,
        Head::YAggregate,
        Head::KeyAggregate,
        Head::ColorField,
        Head::Limit,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Action => "action",
            Head::KeyColumn => "key_column",
            Head::RemoveIndex => "remove_index",
            Head::Mark => "mark",
            Head::YField => "y_field",
            Head::YAggregate => "y_aggregate",
            Head::KeyAggregate => "key_aggregate",
            Head::ColorField => "color_field",
            Head::Limit => "limit",
        }
    }

    /// Number of options. Only the remove head depends on configuration.
    pub fn arity(self, n_max: usize) -> usize {
        match self {
            Head::Action => ActionKind::ALL.len(),
            Head::KeyColumn | Head::YField => MAX_CONTEXT_COLUMNS,
            Head::RemoveIndex => n_max,
            Head::Mark => Mark::ALL.len(),
            Head::YAggregate | Head::KeyAggregate => Aggregate::ALL.len(),
            Head::ColorField => MAX_CONTEXT_COLUMNS + 1,
            Head::Limit => LimitChoice::ALL.len(),
        }
    }

    fn add_position(self) -> Option<usize> {
        ADD_HEADS.iter().position(|h| *h == self)
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn head_arities(n_max: usize) -> [usize; NUM_HEADS] {
    Head::ALL.map(|h| h.arity(n_max))
}

/// Head selections as option indices; `None` is the dummy value of an inactive head.
pub type Selections = [Option<usize>; NUM_HEADS];

/// One agent step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDecision {
    pub action: ActionKind,
    /// Column index (dataset order) of the new key.
    pub key_column: Option<usize>,
    pub remove_index: Option<usize>,
    pub mark: Option<Mark>,
    /// Column index of the explanation field.
    pub y_field: Option<usize>,
    pub y_aggregate: Option<Aggregate>,
    pub key_aggregate: Option<Aggregate>,
    /// Color head option: 0 is no color, `i + 1` is column `i`.
    pub color_field: Option<usize>,
    pub limit: Option<LimitChoice>,
    /// Log-probability per head in [`Head::ALL`] order, 0 for inactive heads.
    pub per_head_log_prob: [f64; NUM_HEADS],
    pub joint_log_prob: f64,
}

impl ActionDecision {
    fn bare(action: ActionKind) -> Self {
        Self {
            action,
            key_column: None,
            remove_index: None,
            mark: None,
            y_field: None,
            y_aggregate: None,
            key_aggregate: None,
            color_field: None,
            limit: None,
            per_head_log_prob: [0.0; NUM_HEADS],
            joint_log_prob: 0.0,
        }
    }

    pub fn terminate() -> Self {
        Self::bare(ActionKind::Terminate)
    }

    pub fn change(column: usize) -> Self {
        Self {
            key_column: Some(column),
            ..Self::bare(ActionKind::Change)
        }
    }

    pub fn remove(index: usize) -> Self {
        Self {
            remove_index: Some(index),
            ..Self::bare(ActionKind::Remove)
        }
    }

    pub fn add(t: AddTuple) -> Self {
        Self {
            mark: Some(t.mark),
            y_field: Some(t.y_field),
            y_aggregate: Some(t.y_aggregate),
            key_aggregate: Some(t.key_aggregate),
            color_field: Some(t.color.map_or(0, |c| c + 1)),
            limit: Some(t.limit),
            ..Self::bare(ActionKind::Add)
        }
    }

    pub fn selections(&self) -> Selections {
        [
            Some(self.action.index()),
            self.key_column,
            self.remove_index,
            self.mark.map(Mark::index),
            self.y_field,
            self.y_aggregate.map(Aggregate::index),
            self.key_aggregate.map(Aggregate::index),
            self.color_field,
            self.limit.map(LimitChoice::index),
        ]
    }

    /// Inverse of [`selections`](Self::selections). Indices must be in range.
    pub fn from_selections(sel: &Selections) -> Result<Self, EnvError> {
        let action = sel[0]
            .and_then(|i| ActionKind::ALL.get(i).copied())
            .ok_or(EnvError::MissingSelection(Head::Action))?;
        let pick = |h: Head| sel[h.index()];
        let range = |h: Head, n: usize| -> Result<Option<usize>, EnvError> {
            match pick(h) {
                Some(i) if i >= n => Err(EnvError::OutOfRange { head: h, choice: i }),
                other => Ok(other),
            }
        };
        Ok(Self {
            action,
            key_column: range(Head::KeyColumn, usize::MAX)?,
            remove_index: range(Head::RemoveIndex, usize::MAX)?,
            mark: range(Head::Mark, 4)?.map(|i| Mark::ALL[i]),
            y_field: range(Head::YField, usize::MAX)?,
            y_aggregate: range(Head::YAggregate, 7)?.map(|i| Aggregate::ALL[i]),
            key_aggregate: range(Head::KeyAggregate, 7)?.map(|i| Aggregate::ALL[i]),
            color_field: range(Head::ColorField, usize::MAX)?,
            limit: range(Head::Limit, 3)?.map(|i| LimitChoice::ALL[i]),
            per_head_log_prob: [0.0; NUM_HEADS],
            joint_log_prob: 0.0,
        })
    }

    pub fn add_tuple(&self) -> Option<AddTuple> {
        Some(AddTuple {
            mark: self.mark?,
            y_field: self.y_field?,
            y_aggregate: self.y_aggregate?,
            key_aggregate: self.key_aggregate?,
            color: match self.color_field? {
                0 => None,
                c => Some(c - 1),
            },
            limit: self.limit?,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("head {head} selected masked option {choice}")]
    MaskedDecision { head: Head, choice: usize },
    #[error("head {head} option {choice} is out of range")]
    OutOfRange { head: Head, choice: usize },
    #[error("active head {0} has no selection")]
    MissingSelection(Head),
    #[error("inactive head {0} carries a selection")]
    InactiveSelection(Head),
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error("start state is invalid: {0}")]
    InvalidStart(String),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

/// How much of the grammar the masks enforce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Masks admit exactly the valid charts and substitutable keys.
    #[default]
    Grammar,
    /// Masks only rule out options that do not exist (unused column slots,
    /// empty chart slots, add on a full dashboard). Invalid choices are
    /// penalized instead.
    Structural,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub reward: RewardConfig,
    pub max_steps: usize,
    pub mask_mode: MaskMode,
    /// Reward for an invalid decision under structural masking.
    pub invalid_penalty: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            reward: RewardConfig::default(),
            max_steps: MAX_STEPS,
            mask_mode: MaskMode::Grammar,
            invalid_penalty: -1.0,
        }
    }
}

/// A dataset with everything the environment and encoder precompute for it.
/// Shared read-only between workers.
pub struct PreparedDataset {
    pub dataset: Dataset,
    pub space: ActionSpace,
    pub encoder: DashboardEncoder,
    insight_config: InsightConfig,
    insights: Mutex<HashMap<ChartSpec, Arc<Vec<InsightRecord>>>>,
}

impl fmt::Debug for PreparedDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PreparedDataset")
            .field("dataset", &self.dataset.name)
            .finish_non_exhaustive()
    }
}

impl PreparedDataset {
    pub fn new(dataset: Dataset, insight_config: InsightConfig) -> Arc<Self> {
        Arc::new(Self {
            space: ActionSpace::new(&dataset),
            encoder: DashboardEncoder::new(&dataset),
            dataset,
            insight_config,
            insights: Mutex::new(HashMap::new()),
        })
    }

    pub fn chart_insights(&self, spec: &ChartSpec) -> Result<Arc<Vec<InsightRecord>>, ChartError> {
        if let Some(hit) = self.insights.lock().get(spec) {
            return Ok(hit.clone());
        }
        let found = Arc::new(detect_chart_insights(spec, &self.dataset, &self.insight_config)?);
        self.insights.lock().insert(spec.clone(), found.clone());
        Ok(found)
    }

    pub fn dashboard_insights(&self, state: &DashboardState) -> Result<Vec<InsightRecord>, ChartError> {
        let per_chart = state
            .charts
            .iter()
            .map(|c| self.chart_insights(c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(combine_chart_insights(
            per_chart.iter().enumerate().map(|(i, r)| (i, r.as_slice())),
        ))
    }

    pub fn score(
        &self,
        state: &DashboardState,
        reward: &RewardConfig,
    ) -> Result<(RewardBreakdown, Vec<InsightRecord>), ChartError> {
        let insights = self.dashboard_insights(state)?;
        Ok((score_from_insights(state, &self.dataset, &insights, reward), insights))
    }

    /// Column index of `name` if the agent can address it.
    pub fn context_index(&self, name: &str) -> Option<usize> {
        self.dataset
            .column_index(name)
            .filter(|i| *i < self.space.columns())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub state: DashboardState,
    pub reward: f64,
    pub done: bool,
    pub breakdown: RewardBreakdown,
    /// The decision was invalid and was penalized instead of applied.
    pub penalized: bool,
}

/// Masks for one state. The action, key and remove masks are fixed by the
/// state; add-head masks depend on the selections made before them.
#[derive(Debug, Clone)]
pub struct ActionMasks {
    pub action: Vec<bool>,
    pub key_column: Vec<bool>,
    pub remove_index: Vec<bool>,
    mode: MaskMode,
    data: Arc<PreparedDataset>,
    key: Option<usize>,
    n_max: usize,
}

impl ActionMasks {
    /// Mask of `head` given the selections already made for earlier heads.
    pub fn mask(&self, head: Head, prefix: &Selections) -> Vec<bool> {
        match head {
            Head::Action => self.action.clone(),
            Head::KeyColumn => self.key_column.clone(),
            Head::RemoveIndex => self.remove_index.clone(),
            _ => {
                let pos = head.add_position().expect("add head");
                let arity = head.arity(self.n_max);
                match self.mode {
                    MaskMode::Grammar => {
                        let mut sel = [0usize; 6];
                        for (i, h) in ADD_HEADS[..pos].iter().enumerate() {
                            sel[i] = prefix[h.index()].expect("earlier add heads are selected");
                        }
                        let mut mask = vec![false; arity];
                        if let Some(key) = self.key {
                            for opt in self.data.space.next_options(key, &sel[..pos]) {
                                mask[opt] = true;
                            }
                        }
                        mask
                    }
                    MaskMode::Structural => {
                        let cols = self.data.space.columns();
                        match head {
                            Head::YField => (0..arity).map(|i| i < cols).collect(),
                            Head::ColorField => (0..arity).map(|i| i <= cols).collect(),
                            _ => vec![true; arity],
                        }
                    }
                }
            }
        }
    }

    /// Masks for every active head of a completed decision, in head order.
    pub fn masks_for(&self, decision: &ActionDecision) -> Vec<(Head, Vec<bool>)> {
        let sel = decision.selections();
        decision
            .action
            .active_heads()
            .iter()
            .map(|h| (*h, self.mask(*h, &sel)))
            .collect()
    }

    /// True if some action other than terminate is available.
    pub fn any_non_terminate(&self) -> bool {
        self.action[..ActionKind::Terminate.index()].iter().any(|m| *m)
    }

    /// Checks that active heads are selected and unmasked and inactive heads are dummies.
    pub fn check(&self, decision: &ActionDecision) -> Result<(), EnvError> {
        let sel = decision.selections();
        let active = decision.action.active_heads();
        for head in Head::ALL {
            let choice = sel[head.index()];
            if !active.contains(&head) {
                if choice.is_some() {
                    return Err(EnvError::InactiveSelection(head));
                }
                continue;
            }
            let choice = choice.ok_or(EnvError::MissingSelection(head))?;
            let mask = self.mask(head, &sel);
            match mask.get(choice) {
                None => return Err(EnvError::OutOfRange { head, choice }),
                Some(false) => return Err(EnvError::MaskedDecision { head, choice }),
                Some(true) => {}
            }
        }
        Ok(())
    }
}

/// One environment instance. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Environment {
    data: Arc<PreparedDataset>,
    config: EnvConfig,
    state: DashboardState,
    breakdown: RewardBreakdown,
    insights: Vec<InsightRecord>,
    done: bool,
    rotation: usize,
}

impl Environment {
    pub fn new(data: Arc<PreparedDataset>, config: EnvConfig) -> Self {
        let first = data.dataset.columns[0].name.clone();
        Self {
            data,
            config,
            state: DashboardState::empty(first),
            breakdown: RewardBreakdown::default(),
            insights: Vec::new(),
            done: false,
            rotation: 0,
        }
    }

    pub fn data(&self) -> &Arc<PreparedDataset> {
        &self.data
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data.dataset
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &DashboardState {
        &self.state
    }

    pub fn breakdown(&self) -> &RewardBreakdown {
        &self.breakdown
    }

    pub fn insights(&self) -> &[InsightRecord] {
        &self.insights
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Starts an episode from `start` (step reset to 0) or from an empty
    /// dashboard keyed on `seed_key`, or on the next column of a rotation over
    /// the addressable columns when neither is given.
    pub fn reset(
        &mut self,
        start: Option<DashboardState>,
        seed_key: Option<&str>,
    ) -> Result<&DashboardState, EnvError> {
        let state = match start {
            Some(mut s) => {
                let violations = s.validate(&self.data.dataset, self.config.reward.n_max)?;
                if let Some(v) = violations.first() {
                    let why: Vec<String> = v.violations.iter().map(|x| x.to_string()).collect();
                    return Err(EnvError::InvalidStart(format!(
                        "chart {}: {}",
                        v.chart,
                        why.join("; ")
                    )));
                }
                s.step = 0;
                s
            }
            None => {
                let key = match seed_key {
                    Some(k) => {
                        if self.data.dataset.column(k).is_none() {
                            return Err(ChartError::UnknownColumn(k.to_string()).into());
                        }
                        k.to_string()
                    }
                    None => {
                        let cols = self.data.space.columns();
                        let k = self.data.dataset.columns[self.rotation % cols].name.clone();
                        self.rotation += 1;
                        k
                    }
                };
                DashboardState::empty(key)
            }
        };
        let (breakdown, insights) = self.data.score(&state, &self.config.reward)?;
        self.state = state;
        self.breakdown = breakdown;
        self.insights = insights;
        self.done = false;
        Ok(&self.state)
    }

    /// Reorders the charts at random. Scores do not depend on chart order; the
    /// network does, so training shuffles to cover orders.
    pub fn shuffle_charts(&mut self, rng: &mut impl Rng) -> Result<(), EnvError> {
        if self.state.charts.len() < 2 {
            return Ok(());
        }
        self.state.charts.shuffle(rng);
        let r = self.breakdown.r_immediate;
        let (breakdown, insights) = self.data.score(&self.state, &self.config.reward)?;
        self.breakdown = breakdown;
        self.breakdown.r_immediate = r;
        self.insights = insights;
        Ok(())
    }

    pub fn masks(&self) -> ActionMasks {
        masks_for_state(&self.data, &self.state, &self.config)
    }

    pub fn step(&mut self, decision: &ActionDecision) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let masks = self.masks();
        masks.check(decision)?;

        let next = self.transition(decision)?;
        let penalized = next.is_none();
        let mut reward = self.config.invalid_penalty;
        if let Some(state) = next {
            let (breakdown, insights) = self.data.score(&state, &self.config.reward)?;
            reward = crate::reward::immediate_reward(&self.breakdown, &breakdown);
            self.state = state;
            self.breakdown = breakdown;
            self.insights = insights;
        }
        self.state.step += 1;
        self.breakdown.r_immediate = reward;
        self.done = decision.action == ActionKind::Terminate
            || self.state.step >= self.config.max_steps
            || !self.masks().any_non_terminate();
        Ok(StepResult {
            state: self.state.clone(),
            reward,
            done: self.done,
            breakdown: self.breakdown,
            penalized,
        })
    }

    /// The next state, or `None` if the decision is invalid (structural masking only).
    fn transition(&self, decision: &ActionDecision) -> Result<Option<DashboardState>, EnvError> {
        let dataset = &self.data.dataset;
        let mut state = self.state.clone();
        match decision.action {
            ActionKind::Terminate => {}
            ActionKind::Remove => {
                state.charts.remove(decision.remove_index.expect("checked"));
            }
            ActionKind::Change => {
                let col = &dataset.columns[decision.key_column.expect("checked")].name;
                if *col == state.key_column {
                    return Ok(None);
                }
                match substitute_key_column(&state, col, dataset)? {
                    Substitution::Applied(s) => state = s,
                    Substitution::Refused { .. } => return Ok(None),
                }
            }
            ActionKind::Add => {
                let tuple = decision.add_tuple().expect("checked");
                let Some(key) = self.data.context_index(&state.key_column) else {
                    return Ok(None);
                };
                match build_chart(dataset, key, &tuple) {
                    Some(chart) => state.charts.push(chart),
                    None => return Ok(None),
                }
            }
        }
        Ok(Some(state))
    }
}

/// Masks for an arbitrary state of a prepared dataset.
pub fn masks_for_state(
    data: &Arc<PreparedDataset>,
    state: &DashboardState,
    config: &EnvConfig,
) -> ActionMasks {
    let n_max = config.reward.n_max;
    let cols = data.space.columns();
    let key = data.context_index(&state.key_column);
    let full = state.charts.len() >= n_max;

    let mut key_column = vec![false; MAX_CONTEXT_COLUMNS];
    for (c, slot) in key_column.iter_mut().enumerate().take(cols) {
        if Some(c) == key {
            continue;
        }
        *slot = match config.mask_mode {
            MaskMode::Structural => true,
            MaskMode::Grammar => matches!(
                substitute_key_column(state, &data.dataset.columns[c].name, &data.dataset),
                Ok(Substitution::Applied(_))
            ),
        };
    }
    let remove_index: Vec<bool> = (0..n_max).map(|i| i < state.charts.len()).collect();
    let can_add = !full
        && match config.mask_mode {
            MaskMode::Structural => true,
            MaskMode::Grammar => key.is_some_and(|k| data.space.has_any(k)),
        };
    let mut action = vec![false; ActionKind::ALL.len()];
    action[ActionKind::Change.index()] = key_column.iter().any(|m| *m);
    action[ActionKind::Add.index()] = can_add;
    action[ActionKind::Remove.index()] = !state.charts.is_empty();
    action[ActionKind::Terminate.index()] = true;
    ActionMasks {
        action,
        key_column,
        remove_index,
        mode: config.mask_mode,
        data: data.clone(),
        key,
        n_max,
    }
}

#[cfg(test)]
mod tests;
