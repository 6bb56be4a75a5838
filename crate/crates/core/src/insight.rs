//! Insight detection over charts and dashboards.
//!
//! | kind | columns | condition |
//! |------|---------|-----------|
//! | distribution | A (Q) | histogram: bar of bin(A) against a count |
//! | trend | A (Q), B (T) | line of A over raw B |
//! | correlation | A, B (Q) | line or point of A and B with \|r\| of the drawn data ≥ θ |
//! | topk / bottomk | A (N), B (Q) | bar of an aggregate of B by A with a top/bottom limit |
//! | co_correlation | A, B, C (Q) | correlation records on (A, B) and (A, C) |
//! | comparison | A (N), B (Q) | both a topk and a bottomk record on (A, B) |
//!
//! Single-column kinds weigh 1, double-column kinds 2, multi-chart kinds 3.
//! Records are unique per `(kind, columns)` within a dashboard.

use crate::chart::{apply_transform, Aggregate, ChartError, ChartSpec, Channel, DashboardState, Mark};
use crate::data::{Cell, ColumnType, Dataset};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InsightConfig {
    /// Minimum absolute Pearson coefficient for a correlation insight.
    pub correlation_threshold: f64,
}

impl Default for InsightConfig {
    fn default() -> Self {
        Self {
            correlation_threshold: DEFAULT_CORRELATION_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InsightKind {
    #[serde(rename = "distribution")]
    Distribution,
    #[serde(rename = "trend")]
    Trend,
    #[serde(rename = "correlation")]
    Correlation,
    #[serde(rename = "topk")]
    TopK,
    #[serde(rename = "bottomk")]
    BottomK,
    #[serde(rename = "co_correlation")]
    CoCorrelation,
    #[serde(rename = "comparison")]
    Comparison,
}

impl InsightKind {
    pub const ALL: [InsightKind; 7] = [
        InsightKind::Distribution,
        InsightKind::Trend,
        InsightKind::Correlation,
        InsightKind::TopK,
        InsightKind::BottomK,
        InsightKind::CoCorrelation,
        InsightKind::Comparison,
    ];

    pub fn reward_weight(self) -> u8 {
        match self {
            InsightKind::Distribution => 1,
            InsightKind::Trend
            | InsightKind::Correlation
            | InsightKind::TopK
            | InsightKind::BottomK => 2,
            InsightKind::CoCorrelation | InsightKind::Comparison => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InsightKind::Distribution => "distribution",
            InsightKind::Trend => "trend",
            InsightKind::Correlation => "correlation",
            InsightKind::TopK => "topk",
            InsightKind::BottomK => "bottomk",
            InsightKind::CoCorrelation => "co_correlation",
            InsightKind::Comparison => "comparison",
        }
    }
}

impl fmt::Display for InsightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightRecord {
    pub kind: InsightKind,
    pub columns: Vec<String>,
    pub chart_indices: BTreeSet<usize>,
    /// |r| for correlation kinds, 1.0 for structural kinds.
    pub value: f64,
    pub reward_weight: u8,
}

impl InsightRecord {
    pub fn new(kind: InsightKind, columns: Vec<String>, value: f64) -> Self {
        Self {
            kind,
            columns,
            chart_indices: BTreeSet::new(),
            value,
            reward_weight: kind.reward_weight(),
        }
    }

    pub fn key(&self) -> (InsightKind, &[String]) {
        (self.kind, &self.columns)
    }
}

/// Product-moment correlation. `None` below three pairs; 0 when either
/// series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson needs equal-length series");
    let n = a.len();
    if n < 3 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Some(0.0);
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// [`pearson`] over cells, dropping pairs where either side is missing.
pub fn pearson_cells(a: &[Cell], b: &[Cell]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x.as_f64()?, y.as_f64()?)))
        .unzip();
    pearson(&xs, &ys)
}

fn ctype(dataset: &Dataset, column: &str) -> Option<ColumnType> {
    dataset.column(column).map(|c| c.ctype)
}

/// Insights carried by one chart on its own. Chart indices are left empty.
pub fn detect_chart_insights(
    spec: &ChartSpec,
    dataset: &Dataset,
    config: &InsightConfig,
) -> Result<Vec<InsightRecord>, ChartError> {
    let mut out = Vec::new();
    let q = |col: &str| ctype(dataset, col) == Some(ColumnType::Quantitative);
    match spec.mark {
        Mark::Bar => {
            for (binned, other) in [(&spec.x, &spec.y), (&spec.y, &spec.x)] {
                if binned.aggregate == Aggregate::Bin
                    && other.aggregate == Aggregate::Count
                    && q(&binned.column)
                {
                    out.push(InsightRecord::new(
                        InsightKind::Distribution,
                        vec![binned.column.clone()],
                        1.0,
                    ));
                }
            }
            if let Some(limit) = spec.limit {
                for (cat, measure) in [(&spec.x, &spec.y), (&spec.y, &spec.x)] {
                    let is_measure = matches!(
                        measure.aggregate,
                        Aggregate::Mean | Aggregate::Sum | Aggregate::Min | Aggregate::Max
                    );
                    if cat.aggregate == Aggregate::None
                        && ctype(dataset, &cat.column) == Some(ColumnType::Nominal)
                        && is_measure
                        && q(&measure.column)
                    {
                        let kind = match limit.direction {
                            crate::chart::LimitDirection::Top => InsightKind::TopK,
                            crate::chart::LimitDirection::Bottom => InsightKind::BottomK,
                        };
                        out.push(InsightRecord::new(
                            kind,
                            vec![cat.column.clone(), measure.column.clone()],
                            1.0,
                        ));
                    }
                }
            }
        }
        Mark::Line | Mark::Point => {
            if spec.mark == Mark::Line
                && spec.x.aggregate == Aggregate::None
                && ctype(dataset, &spec.x.column) == Some(ColumnType::Temporal)
                && spec.y.aggregate != Aggregate::Count
                && q(&spec.y.column)
            {
                out.push(InsightRecord::new(
                    InsightKind::Trend,
                    vec![spec.y.column.clone(), spec.x.column.clone()],
                    1.0,
                ));
            }
            let numeric_pair = q(&spec.x.column)
                && q(&spec.y.column)
                && spec.x.column != spec.y.column
                && spec.x.aggregate != Aggregate::Count
                && spec.y.aggregate != Aggregate::Count;
            if numeric_pair {
                let table = apply_transform(dataset, spec)?;
                let xs = table.column(Channel::X).unwrap_or(&[]);
                let ys = table.column(Channel::Y).unwrap_or(&[]);
                if let Some(r) = pearson_cells(xs, ys) {
                    if r.abs() >= config.correlation_threshold {
                        let mut cols = vec![spec.x.column.clone(), spec.y.column.clone()];
                        cols.sort();
                        out.push(InsightRecord::new(InsightKind::Correlation, cols, r.abs()));
                    }
                }
            }
        }
        Mark::Boxplot => {}
    }
    Ok(out)
}

/// Merges per-chart records (deduplicating by key) and adds the cross-chart
/// kinds. Output is sorted by `(kind, columns)`.
pub fn combine_chart_insights<'a>(
    per_chart: impl IntoIterator<Item = (usize, &'a [InsightRecord])>,
) -> Vec<InsightRecord> {
    let mut merged: BTreeMap<(InsightKind, Vec<String>), InsightRecord> = BTreeMap::new();
    let add = |rec: InsightRecord, merged: &mut BTreeMap<_, InsightRecord>| {
        merged
            .entry((rec.kind, rec.columns.clone()))
            .and_modify(|existing: &mut InsightRecord| {
                existing.value = existing.value.max(rec.value);
                existing.chart_indices.extend(rec.chart_indices.iter().copied());
            })
            .or_insert(rec);
    };
    for (index, records) in per_chart {
        for r in records {
            let mut r = r.clone();
            r.chart_indices = BTreeSet::from([index]);
            add(r, &mut merged);
        }
    }

    let correlations: Vec<InsightRecord> = merged
        .values()
        .filter(|r| r.kind == InsightKind::Correlation)
        .cloned()
        .collect();
    for (i, a) in correlations.iter().enumerate() {
        for b in &correlations[i + 1..] {
            let shared: Vec<&String> = a.columns.iter().filter(|c| b.columns.contains(c)).collect();
            if shared.len() != 1 {
                continue;
            }
            let mut cols: Vec<String> = a.columns.iter().chain(&b.columns).cloned().collect();
            cols.sort();
            cols.dedup();
            let mut rec = InsightRecord::new(InsightKind::CoCorrelation, cols, a.value.min(b.value));
            rec.chart_indices = a.chart_indices.union(&b.chart_indices).copied().collect();
            add(rec, &mut merged);
        }
    }

    let tops: Vec<InsightRecord> = merged
        .values()
        .filter(|r| r.kind == InsightKind::TopK)
        .cloned()
        .collect();
    for top in tops {
        let bottom = merged
            .get(&(InsightKind::BottomK, top.columns.clone()))
            .cloned();
        if let Some(bottom) = bottom {
            let mut rec = InsightRecord::new(InsightKind::Comparison, top.columns.clone(), 1.0);
            rec.chart_indices = top
                .chart_indices
                .union(&bottom.chart_indices)
                .copied()
                .collect();
            add(rec, &mut merged);
        }
    }
    merged.into_values().collect()
}

/// All insights of a dashboard: per-chart records plus relations between any two charts.
pub fn detect_dashboard_insights(
    state: &DashboardState,
    dataset: &Dataset,
    config: &InsightConfig,
) -> Result<Vec<InsightRecord>, ChartError> {
    let per_chart = state
        .charts
        .iter()
        .map(|c| detect_chart_insights(c, dataset, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(combine_chart_insights(
        per_chart.iter().enumerate().map(|(i, r)| (i, r.as_slice())),
    ))
}
