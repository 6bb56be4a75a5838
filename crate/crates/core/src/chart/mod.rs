//! Charts, dashboards and the chart validity grammar.

mod grammar;
mod render;
pub(crate) mod transform;

pub use grammar::{
    check_key_placement, validate_chart, validate_chart_for_key, ChannelRole, ColumnMeta,
    Violation, MAX_BAR_CATEGORIES, MAX_COLOR_CATEGORIES,
};
pub(crate) use grammar::{check_parts, EncodingMeta};
pub use render::{to_render_spec, validate_render_spec, VEGA_LITE_SCHEMA};
pub use transform::{apply_transform, BinParams, RenderedTable};

use crate::data::Dataset;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Rows kept by a top/bottom limit.
pub const DEFAULT_LIMIT_K: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("{0:?} is already the key column")]
    SameKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    Bar,
    Line,
    Point,
    Boxplot,
}

impl Mark {
    pub const ALL: [Mark; 4] = [Mark::Bar, Mark::Line, Mark::Point, Mark::Boxplot];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Mark::Bar => "bar",
            Mark::Line => "line",
            Mark::Point => "point",
            Mark::Boxplot => "boxplot",
        }
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    None,
    Mean,
    Sum,
    Min,
    Max,
    Count,
    Bin,
}

impl Aggregate {
    pub const ALL: [Aggregate; 7] = [
        Aggregate::None,
        Aggregate::Mean,
        Aggregate::Sum,
        Aggregate::Min,
        Aggregate::Max,
        Aggregate::Count,
        Aggregate::Bin,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregate::None => "none",
            Aggregate::Mean => "mean",
            Aggregate::Sum => "sum",
            Aggregate::Min => "min",
            Aggregate::Max => "max",
            Aggregate::Count => "count",
            Aggregate::Bin => "bin",
        }
    }

    /// Only defined on quantitative columns.
    pub fn requires_quantitative(self) -> bool {
        matches!(
            self,
            Aggregate::Mean | Aggregate::Sum | Aggregate::Min | Aggregate::Max | Aggregate::Bin
        )
    }

    /// Raw and binned fields become group-by keys; everything else is a measure.
    pub fn is_group_key(self) -> bool {
        matches!(self, Aggregate::None | Aggregate::Bin)
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    X,
    Y,
    Color,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Color => "color",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Encoding {
    pub column: String,
    pub aggregate: Aggregate,
}

impl Encoding {
    pub fn new(column: impl Into<String>, aggregate: Aggregate) -> Self {
        Self {
            column: column.into(),
            aggregate,
        }
    }

    pub fn raw(column: impl Into<String>) -> Self {
        Self::new(column, Aggregate::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitDirection {
    Top,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Limit {
    pub direction: LimitDirection,
    pub k: usize,
}

impl Limit {
    pub fn top(k: usize) -> Self {
        Self {
            direction: LimitDirection::Top,
            k,
        }
    }

    pub fn bottom(k: usize) -> Self {
        Self {
            direction: LimitDirection::Bottom,
            k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChartSpec {
    pub mark: Mark,
    pub x: Encoding,
    pub y: Encoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Encoding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<Limit>,
}

impl ChartSpec {
    pub fn new(mark: Mark, x: Encoding, y: Encoding) -> Self {
        Self {
            mark,
            x,
            y,
            color: None,
            limit: None,
        }
    }

    pub fn with_color(mut self, color: Encoding) -> Self {
        self.color = Some(color);
        self
    }

    pub fn with_limit(mut self, limit: Limit) -> Self {
        self.limit = Some(limit);
        self
    }

    pub fn channels(&self) -> impl Iterator<Item = (Channel, &Encoding)> {
        [(Channel::X, &self.x), (Channel::Y, &self.y)]
            .into_iter()
            .chain(self.color.as_ref().map(|c| (Channel::Color, c)))
    }

    pub fn encoding(&self, channel: Channel) -> Option<&Encoding> {
        match channel {
            Channel::X => Some(&self.x),
            Channel::Y => Some(&self.y),
            Channel::Color => self.color.as_ref(),
        }
    }

    pub fn columns(&self) -> BTreeSet<&str> {
        self.channels().map(|(_, e)| e.column.as_str()).collect()
    }

    /// The positional channel carrying `key`, if exactly one does.
    pub fn key_channel(&self, key: &str) -> Option<Channel> {
        match (self.x.column == key, self.y.column == key) {
            (true, false) => Some(Channel::X),
            (false, true) => Some(Channel::Y),
            _ => None,
        }
    }

    /// The non-key positional encoding.
    pub fn explanation(&self, key: &str) -> Option<&Encoding> {
        match self.key_channel(key)? {
            Channel::X => Some(&self.y),
            _ => Some(&self.x),
        }
    }

    fn rewrite_column(&self, from: &str, to: &str) -> ChartSpec {
        let swap = |e: &Encoding| {
            if e.column == from {
                Encoding::new(to, e.aggregate)
            } else {
                e.clone()
            }
        };
        ChartSpec {
            mark: self.mark,
            x: swap(&self.x),
            y: swap(&self.y),
            color: self.color.as_ref().map(swap),
            limit: self.limit,
        }
    }
}

/// A dashboard under construction: the key column every chart shares, the
/// charts, and the number of steps taken to reach it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DashboardState {
    pub key_column: String,
    pub charts: Vec<ChartSpec>,
    pub step: usize,
}

/// A chart-level problem found when validating a whole dashboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateViolation {
    pub chart: usize,
    pub violations: Vec<Violation>,
}

/// Outcome of re-keying a dashboard.
#[derive(Debug, Clone, PartialEq)]
pub enum Substitution {
    Applied(DashboardState),
    /// The listed charts would become invalid under the new key.
    Refused { failing_charts: Vec<usize> },
}

impl DashboardState {
    pub fn empty(key_column: impl Into<String>) -> Self {
        Self {
            key_column: key_column.into(),
            charts: Vec::new(),
            step: 0,
        }
    }

    /// Distinct mark types in use.
    pub fn mark_types(&self) -> BTreeSet<Mark> {
        self.charts.iter().map(|c| c.mark).collect()
    }

    /// Distinct dataset columns drawn on any channel of any chart. A count
    /// encoding draws no field, so its column is not included.
    pub fn encoded_columns(&self) -> BTreeSet<&str> {
        self.charts
            .iter()
            .flat_map(|c| c.channels())
            .filter(|(_, e)| e.aggregate != Aggregate::Count)
            .map(|(_, e)| e.column.as_str())
            .collect()
    }

    /// Checks the key column and every chart (grammar plus key placement).
    /// Returns the charts that fail; an empty list means the state is valid.
    pub fn validate(
        &self,
        dataset: &Dataset,
        n_max: usize,
    ) -> Result<Vec<StateViolation>, ChartError> {
        if dataset.column(&self.key_column).is_none() {
            return Err(ChartError::UnknownColumn(self.key_column.clone()));
        }
        let mut out = Vec::new();
        for (i, chart) in self.charts.iter().enumerate() {
            let violations = validate_chart_for_key(chart, &self.key_column, dataset)?;
            if !violations.is_empty() {
                out.push(StateViolation {
                    chart: i,
                    violations,
                });
            }
        }
        if self.charts.len() > n_max {
            out.push(StateViolation {
                chart: self.charts.len() - 1,
                violations: vec![Violation::TooManyCharts {
                    count: self.charts.len(),
                    max: n_max,
                }],
            });
        }
        Ok(out)
    }

    /// Multiset equality of charts, ignoring order and step.
    pub fn same_charts(&self, other: &DashboardState) -> bool {
        let mut a = self.charts.clone();
        let mut b = other.charts.clone();
        a.sort();
        b.sort();
        self.key_column == other.key_column && a == b
    }
}

/// Rewrites the key column of every chart to `new_key`. Succeeds only if every
/// rewritten chart still validates.
pub fn substitute_key_column(
    state: &DashboardState,
    new_key: &str,
    dataset: &Dataset,
) -> Result<Substitution, ChartError> {
    if new_key == state.key_column {
        return Err(ChartError::SameKey(new_key.to_string()));
    }
    if dataset.column(new_key).is_none() {
        return Err(ChartError::UnknownColumn(new_key.to_string()));
    }
    let mut charts = Vec::with_capacity(state.charts.len());
    let mut failing = Vec::new();
    for (i, chart) in state.charts.iter().enumerate() {
        let rewritten = chart.rewrite_column(&state.key_column, new_key);
        if !validate_chart_for_key(&rewritten, new_key, dataset)?.is_empty() {
            failing.push(i);
        }
        charts.push(rewritten);
    }
    if failing.is_empty() {
        Ok(Substitution::Applied(DashboardState {
            key_column: new_key.to_string(),
            charts,
            step: state.step,
        }))
    } else {
        Ok(Substitution::Refused {
            failing_charts: failing,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_dataset, Dataset};

    fn toy() -> Dataset {
        let csv = "cat,q1,q2,when\n\
                   a,1,10,2020-01-01\n\
                   b,2,20,2020-01-02\n\
                   a,3,30,2020-01-03\n\
                   c,4,40,2020-01-04\n";
        load_dataset(csv.as_bytes(), "toy").unwrap()
    }

    #[test]
    fn empty_dashboard_rekeys() {
        let ds = toy();
        let s = DashboardState::empty("q1");
        match substitute_key_column(&s, "cat", &ds).unwrap() {
            Substitution::Applied(n) => assert_eq!(n.key_column, "cat"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn temporal_key_cannot_be_averaged() {
        let ds = toy();
        let mut s = DashboardState::empty("q1");
        s.charts.push(ChartSpec::new(
            Mark::Bar,
            Encoding::raw("cat"),
            Encoding::new("q1", Aggregate::Mean),
        ));
        s.charts.push(ChartSpec::new(
            Mark::Point,
            Encoding::raw("q2"),
            Encoding::raw("q1"),
        ));
        assert_eq!(
            substitute_key_column(&s, "when", &ds).unwrap(),
            Substitution::Refused {
                failing_charts: vec![0, 1]
            }
        );
    }

    #[test]
    fn quantitative_rekey_round_trips() {
        let ds = toy();
        let mut s = DashboardState::empty("q1");
        s.charts.push(ChartSpec::new(
            Mark::Bar,
            Encoding::raw("cat"),
            Encoding::new("q1", Aggregate::Mean),
        ));
        let Substitution::Applied(n) = substitute_key_column(&s, "q2", &ds).unwrap() else {
            panic!("refused")
        };
        assert_eq!(n.charts[0].y.column, "q2");
        let Substitution::Applied(back) = substitute_key_column(&n, "q1", &ds).unwrap() else {
            panic!("refused")
        };
        assert_eq!(back, s);
    }

    #[test]
    fn line_on_quantitative_key_refuses_nominal_key() {
        let ds = toy();
        let mut s = DashboardState::empty("q1");
        s.charts.push(ChartSpec::new(
            Mark::Line,
            Encoding::raw("when"),
            Encoding::raw("q1"),
        ));
        s.charts.push(ChartSpec::new(
            Mark::Bar,
            Encoding::new("q1", Aggregate::Sum),
            Encoding::raw("when"),
        ));
        match substitute_key_column(&s, "cat", &ds).unwrap() {
            Substitution::Refused { failing_charts } => assert_eq!(failing_charts, vec![0, 1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn same_key_and_unknown_key_are_errors() {
        let ds = toy();
        let s = DashboardState::empty("q1");
        assert_eq!(
            substitute_key_column(&s, "q1", &ds),
            Err(ChartError::SameKey("q1".into()))
        );
        assert!(matches!(
            substitute_key_column(&s, "nope", &ds),
            Err(ChartError::UnknownColumn(_))
        ));
    }
}
