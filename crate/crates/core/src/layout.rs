//! Rule-based dashboard layout on a 12-column grid.
//!
//! Row 0 holds text statistics (3 x 1 cells): the key column first, then up to
//! three other columns that take part in insights. Charts (4 x 3 cells) follow
//! three per row, grouped by mark type in order of first appearance and,
//! within a mark, by their strongest insight kind.

use crate::chart::{ChartError, ChartSpec, DashboardState};
use crate::data::{Cell, ColumnType, Dataset};
use crate::insight::{InsightKind, InsightRecord};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const GRID_COLUMNS: usize = 12;
pub const TEXT_CELL: (usize, usize) = (3, 1);
pub const CHART_CELL: (usize, usize) = (4, 3);
/// Columns besides the key that get a text cell.
pub const MAX_HIGHLIGHTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TextSummary {
    Quantitative { mean: f64, min: f64, max: f64 },
    Nominal { cardinality: usize, mode: Option<String> },
    /// Earliest and latest date, ISO formatted.
    Temporal { start: Option<String>, end: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextStat {
    pub column: String,
    pub summary: TextSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CellContent {
    Text(TextStat),
    /// `index` is the chart's position in the dashboard state.
    Chart { index: usize, spec: ChartSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub content: CellContent,
    pub col: usize,
    pub row: usize,
    pub width: usize,
    pub height: usize,
}

impl GridCell {
    pub fn overlaps(&self, other: &GridCell) -> bool {
        self.col < other.col + other.width
            && other.col < self.col + self.width
            && self.row < other.row + other.height
            && other.row < self.row + self.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionedDashboard {
    pub grid_columns: usize,
    pub cells: Vec<GridCell>,
}

fn iso_date(secs: i64) -> Option<String> {
    chrono::DateTime::from_timestamp(secs, 0).map(|d| d.format("%Y-%m-%d").to_string())
}

fn summarize(dataset: &Dataset, column: &str) -> Result<TextStat, ChartError> {
    let col = dataset
        .column(column)
        .ok_or_else(|| ChartError::UnknownColumn(column.to_string()))?;
    let summary = match col.ctype {
        ColumnType::Quantitative => {
            let xs: Vec<f64> = col.numeric_values().collect();
            let n = xs.len().max(1) as f64;
            TextSummary::Quantitative {
                mean: xs.iter().sum::<f64>() / n,
                min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        }
        ColumnType::Nominal => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for v in &col.values {
                if let Cell::Text(s) = v {
                    *counts.entry(s.as_str()).or_default() += 1;
                }
            }
            // Most frequent; the alphabetically first wins ties.
            let mode = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(k, _)| k.to_string());
            TextSummary::Nominal {
                cardinality: col.cardinality,
                mode,
            }
        }
        ColumnType::Temporal => {
            let dates = col.values.iter().filter_map(|c| match c {
                Cell::Date(s) => Some(*s),
                _ => None,
            });
            let (lo, hi) = dates.fold((None, None), |(lo, hi): (Option<i64>, Option<i64>), d| {
                (Some(lo.map_or(d, |l| l.min(d))), Some(hi.map_or(d, |h| h.max(d))))
            });
            TextSummary::Temporal {
                start: lo.and_then(iso_date),
                end: hi.and_then(iso_date),
            }
        }
    };
    Ok(TextStat {
        column: column.to_string(),
        summary,
    })
}

/// Statistics for the key column followed by the highlighted columns (the key
/// and duplicates are skipped).
pub fn text_stats(dataset: &Dataset, key_column: &str, highlight: &[&str]) -> Result<Vec<TextStat>, ChartError> {
    let mut out = vec![summarize(dataset, key_column)?];
    for c in highlight {
        if out.iter().all(|s| s.column != *c) {
            out.push(summarize(dataset, c)?);
        }
    }
    Ok(out)
}

/// Columns other than the key ranked by how many insights they take part in.
fn highlight_columns<'a>(insights: &'a [InsightRecord], key: &str) -> Vec<&'a str> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in insights {
        for c in &r.columns {
            if c != key {
                *counts.entry(c.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(MAX_HIGHLIGHTS).map(|(c, _)| c).collect()
}

/// The strongest single-chart insight kind of each chart, if any.
fn chart_kinds(n: usize, insights: &[InsightRecord]) -> Vec<Option<InsightKind>> {
    let mut kinds = vec![None; n];
    for r in insights {
        for &i in &r.chart_indices {
            if i < n && kinds[i].is_none_or(|k| r.kind < k) {
                kinds[i] = Some(r.kind);
            }
        }
    }
    kinds
}

pub fn layout(
    state: &DashboardState,
    insights: &[InsightRecord],
    dataset: &Dataset,
) -> Result<PositionedDashboard, ChartError> {
    let highlights = highlight_columns(insights, &state.key_column);
    let stats = text_stats(dataset, &state.key_column, &highlights)?;
    let mut cells: Vec<GridCell> = stats
        .into_iter()
        .enumerate()
        .map(|(i, s)| GridCell {
            content: CellContent::Text(s),
            col: i * TEXT_CELL.0,
            row: 0,
            width: TEXT_CELL.0,
            height: TEXT_CELL.1,
        })
        .collect();

    let mut mark_order = Vec::new();
    for c in &state.charts {
        if !mark_order.contains(&c.mark) {
            mark_order.push(c.mark);
        }
    }
    let kinds = chart_kinds(state.charts.len(), insights);
    let mut order: Vec<usize> = (0..state.charts.len()).collect();
    order.sort_by_key(|&i| {
        let mark = mark_order.iter().position(|m| *m == state.charts[i].mark);
        // Charts without insights come last within their mark group.
        let kind = kinds[i].map_or(InsightKind::ALL.len(), |k| k as usize);
        (mark, kind, i)
    });
    let per_row = GRID_COLUMNS / CHART_CELL.0;
    for (slot, &i) in order.iter().enumerate() {
        cells.push(GridCell {
            content: CellContent::Chart {
                index: i,
                spec: state.charts[i].clone(),
            },
            col: (slot % per_row) * CHART_CELL.0,
            row: TEXT_CELL.1 + (slot / per_row) * CHART_CELL.1,
            width: CHART_CELL.0,
            height: CHART_CELL.1,
        });
    }
    Ok(PositionedDashboard {
        grid_columns: GRID_COLUMNS,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{Aggregate, Encoding, Mark};
    use crate::data::load_dataset;
    use std::collections::BTreeSet;

    fn data() -> Dataset {
        let csv = "q,w,when,q2\n1,rain,2020-01-05,4\n2,sun,2020-03-01,5\n3,rain,2019-12-31,9\n";
        load_dataset(csv.as_bytes(), "t").unwrap()
    }

    fn bar() -> ChartSpec {
        ChartSpec::new(Mark::Bar, Encoding::raw("w"), Encoding::new("q", Aggregate::Mean))
    }

    fn line() -> ChartSpec {
        ChartSpec::new(Mark::Line, Encoding::raw("when"), Encoding::raw("q"))
    }

    fn point() -> ChartSpec {
        ChartSpec::new(Mark::Point, Encoding::raw("q"), Encoding::raw("q2"))
    }

    fn chart_order(p: &PositionedDashboard) -> Vec<usize> {
        p.cells
            .iter()
            .filter_map(|c| match &c.content {
                CellContent::Chart { index, .. } => Some(*index),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn quantitative_stats() {
        let s = text_stats(&data(), "q", &[]).unwrap();
        assert_eq!(
            s[0].summary,
            TextSummary::Quantitative {
                mean: 2.0,
                min: 1.0,
                max: 3.0
            }
        );
    }

    #[test]
    fn nominal_and_temporal_stats() {
        let s = text_stats(&data(), "w", &["when", "w"]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].column, "w");
        assert_eq!(
            s[0].summary,
            TextSummary::Nominal {
                cardinality: 2,
                mode: Some("rain".into())
            }
        );
        assert_eq!(
            s[1].summary,
            TextSummary::Temporal {
                start: Some("2019-12-31".into()),
                end: Some("2020-03-01".into())
            }
        );
        assert!(text_stats(&data(), "nope", &[]).is_err());
    }

    #[test]
    fn empty_dashboard_is_text_only() {
        let p = layout(&DashboardState::empty("q"), &[], &data()).unwrap();
        assert_eq!(p.cells.len(), 1);
        assert_eq!((p.cells[0].row, p.cells[0].width, p.cells[0].height), (0, 3, 1));
    }

    #[test]
    fn charts_are_grouped_by_mark() {
        let mut s = DashboardState::empty("q");
        s.charts = vec![bar(), line(), bar().with_color(Encoding::raw("w")), point()];
        let p = layout(&s, &[], &data()).unwrap();
        assert_eq!(chart_order(&p), vec![0, 2, 1, 3]);
    }

    #[test]
    fn six_charts_fill_two_rows_of_three() {
        let mut s = DashboardState::empty("q");
        s.charts = vec![bar(); 6];
        let p = layout(&s, &[], &data()).unwrap();
        let pos: Vec<(usize, usize)> = p.cells[1..].iter().map(|c| (c.col, c.row)).collect();
        assert_eq!(pos, vec![(0, 1), (4, 1), (8, 1), (0, 4), (4, 4), (8, 4)]);
    }

    #[test]
    fn insight_kind_orders_within_a_mark() {
        let mut s = DashboardState::empty("w");
        s.charts = vec![bar(), bar(), bar()];
        let mut topk = InsightRecord::new(InsightKind::TopK, vec!["w".into(), "q".into()], 1.0);
        topk.chart_indices = BTreeSet::from([2]);
        let mut dist = InsightRecord::new(InsightKind::Distribution, vec!["q".into()], 1.0);
        dist.chart_indices = BTreeSet::from([1]);
        let p = layout(&s, &[topk, dist], &data()).unwrap();
        assert_eq!(chart_order(&p), vec![1, 2, 0]);
        // Key first, then the insight column.
        let texts: Vec<&str> = p
            .cells
            .iter()
            .filter_map(|c| match &c.content {
                CellContent::Text(t) => Some(t.column.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(texts, vec!["w", "q"]);
    }

    #[test]
    fn cells_never_overlap_and_stay_in_bounds() {
        let mut s = DashboardState::empty("q");
        for n in 0..=10 {
            s.charts = (0..n).map(|i| [bar(), line(), point()][i % 3].clone()).collect();
            let p = layout(&s, &[], &data()).unwrap();
            assert_eq!(p, layout(&s, &[], &data()).unwrap());
            for (i, a) in p.cells.iter().enumerate() {
                assert!(a.col + a.width <= GRID_COLUMNS);
                for b in &p.cells[i + 1..] {
                    assert!(!a.overlaps(b));
                }
            }
        }
    }
}
