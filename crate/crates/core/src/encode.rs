//! Dashboard feature matrices.
//!
//! One row per chart, `ROW_WIDTH` = 308 columns:
//!
//! | block | width |
//! |-------|-------|
//! | mark one-hot (bar, line, point, boxplot) | 4 |
//! | x, y, color: used flag, aggregate one-hot, field features | 3 × 28 |
//! | key column features | 20 |
//! | dataset column features, zero-padded to 10 columns | 200 |
//!
//! Field features describe the data as the chart draws it, after grouping,
//! aggregation and limits. An empty dashboard is a single row whose chart blocks
//! are zero.

use crate::chart::{apply_transform, Aggregate, ChartError, ChartSpec, Channel, DashboardState};
use crate::data::{
    compute_column_features, field_features_of, ColumnFeatures, Dataset, FEATURE_DIM,
    MAX_CONTEXT_COLUMNS,
};
use ndarray::Array2;
use parking_lot::Mutex;
use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

pub const MARK_SLOTS: usize = 4;
pub const AGGREGATE_SLOTS: usize = 7;
pub const CHANNEL_BLOCK: usize = 1 + AGGREGATE_SLOTS + FEATURE_DIM;
pub const CHART_BLOCK: usize = MARK_SLOTS + 3 * CHANNEL_BLOCK;
pub const CONTEXT_BLOCK: usize = FEATURE_DIM * (1 + MAX_CONTEXT_COLUMNS);
pub const ROW_WIDTH: usize = CHART_BLOCK + CONTEXT_BLOCK;

const CHANNELS: [Channel; 3] = [Channel::X, Channel::Y, Channel::Color];
const CACHE_LIMIT: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DashboardFeatures {
    pub matrix: Array2<f64>,
    /// True for the placeholder row of an empty dashboard.
    pub row_is_empty_token: Vec<bool>,
    /// Dataset columns beyond the context width were dropped.
    pub truncated_context: bool,
    /// Some encoded field had an empty transformed series.
    pub empty_field: bool,
}

impl DashboardFeatures {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Writes the matrix as CSV with a header naming each slot.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let header: Vec<String> = (0..ROW_WIDTH).map(slot_name).collect();
        writeln!(out, "row,empty,{}", header.join(","))?;
        for (i, row) in self.matrix.outer_iter().enumerate() {
            let values: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{i},{},{}", self.row_is_empty_token[i], values.join(","))?;
        }
        Ok(())
    }
}

fn slot_name(i: usize) -> String {
    if i < MARK_SLOTS {
        return format!("mark_{}", crate::chart::Mark::ALL[i].name());
    }
    if i < CHART_BLOCK {
        let j = i - MARK_SLOTS;
        let channel = CHANNELS[j / CHANNEL_BLOCK].name();
        let k = j % CHANNEL_BLOCK;
        return match k {
            0 => format!("{channel}_used"),
            k if k <= AGGREGATE_SLOTS => format!("{channel}_agg_{}", Aggregate::ALL[k - 1].name()),
            k => format!("{channel}_f{}", k - 1 - AGGREGATE_SLOTS),
        };
    }
    let j = i - CHART_BLOCK;
    if j < FEATURE_DIM {
        format!("key_f{j}")
    } else {
        let j = j - FEATURE_DIM;
        format!("col{}_f{}", j / FEATURE_DIM, j % FEATURE_DIM)
    }
}

/// Chart blocks for one chart (mark + channel blocks), without context.
fn chart_block(spec: &ChartSpec, dataset: &Dataset) -> Result<(Vec<f64>, bool), ChartError> {
    let mut row = vec![0.0; CHART_BLOCK];
    row[spec.mark.index()] = 1.0;
    let table = apply_transform(dataset, spec)?;
    let mut empty = false;
    for (ci, channel) in CHANNELS.iter().enumerate() {
        let Some(enc) = spec.encoding(*channel) else {
            continue;
        };
        let base = MARK_SLOTS + ci * CHANNEL_BLOCK;
        row[base] = 1.0;
        row[base + 1 + enc.aggregate.index()] = 1.0;
        let pos = table
            .channels
            .iter()
            .position(|c| c == channel)
            .expect("transform returns every encoded channel");
        let ff = field_features_of(&(table.types[pos], table.columns[pos].clone()));
        empty |= ff.empty;
        row[base + 1 + AGGREGATE_SLOTS..base + CHANNEL_BLOCK].copy_from_slice(ff.features.as_slice());
    }
    Ok((row, empty))
}

fn context_block(dataset: &Dataset, column_features: &[ColumnFeatures]) -> Vec<f64> {
    let mut ctx = vec![0.0; MAX_CONTEXT_COLUMNS * FEATURE_DIM];
    for (i, f) in column_features.iter().take(MAX_CONTEXT_COLUMNS).enumerate() {
        ctx[i * FEATURE_DIM..(i + 1) * FEATURE_DIM].copy_from_slice(f.as_slice());
    }
    debug_assert_eq!(column_features.len(), dataset.columns.len());
    ctx
}

/// Encodes one chart of `state` as a full feature row.
pub fn encode_chart(
    spec: &ChartSpec,
    state: &DashboardState,
    dataset: &Dataset,
) -> Result<Vec<f64>, ChartError> {
    let key = dataset
        .column(&state.key_column)
        .ok_or_else(|| ChartError::UnknownColumn(state.key_column.clone()))?;
    let features: Vec<ColumnFeatures> = dataset.columns.iter().map(compute_column_features).collect();
    let (mut row, _) = chart_block(spec, dataset)?;
    row.extend_from_slice(compute_column_features(key).as_slice());
    row.extend(context_block(dataset, &features));
    Ok(row)
}

/// Encodes a dashboard without caching.
pub fn encode_dashboard(state: &DashboardState, dataset: &Dataset) -> Result<DashboardFeatures, ChartError> {
    DashboardEncoder::new(dataset).encode(state, dataset)
}

/// Encoder bound to one dataset. Column features are computed once and chart
/// blocks are memoized, so it is cheap to call at every environment step. Safe
/// to share between threads.
pub struct DashboardEncoder {
    column_features: Vec<ColumnFeatures>,
    context: Vec<f64>,
    truncated: bool,
    charts: Mutex<HashMap<ChartSpec, Arc<(Vec<f64>, bool)>>>,
}

impl DashboardEncoder {
    pub fn new(dataset: &Dataset) -> Self {
        let column_features: Vec<ColumnFeatures> =
            dataset.columns.iter().map(compute_column_features).collect();
        let context = context_block(dataset, &column_features);
        Self {
            column_features,
            context,
            truncated: dataset.is_truncated(),
            charts: Mutex::new(HashMap::new()),
        }
    }

    pub fn column_features(&self) -> &[ColumnFeatures] {
        &self.column_features
    }

    fn cached_block(&self, spec: &ChartSpec, dataset: &Dataset) -> Result<Arc<(Vec<f64>, bool)>, ChartError> {
        if let Some(hit) = self.charts.lock().get(spec) {
            return Ok(hit.clone());
        }
        let block = Arc::new(chart_block(spec, dataset)?);
        let mut cache = self.charts.lock();
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(spec.clone(), block.clone());
        Ok(block)
    }

    pub fn encode(&self, state: &DashboardState, dataset: &Dataset) -> Result<DashboardFeatures, ChartError> {
        self.encode_charts(&state.key_column, state.charts.iter(), dataset)
    }

    /// Encodes charts in the order given (used for shuffled training views).
    pub fn encode_charts<'a>(
        &self,
        key_column: &str,
        charts: impl ExactSizeIterator<Item = &'a ChartSpec>,
        dataset: &Dataset,
    ) -> Result<DashboardFeatures, ChartError> {
        let key_index = dataset
            .column_index(key_column)
            .ok_or_else(|| ChartError::UnknownColumn(key_column.to_string()))?;
        let n = charts.len().max(1);
        let mut matrix = Array2::zeros((n, ROW_WIDTH));
        let mut empty_token = vec![false; n];
        let mut empty_field = false;
        let mut count = 0;
        for (i, spec) in charts.enumerate() {
            let block = self.cached_block(spec, dataset)?;
            empty_field |= block.1;
            matrix
                .row_mut(i)
                .as_slice_mut()
                .expect("standard layout")[..CHART_BLOCK]
                .copy_from_slice(&block.0);
            count += 1;
        }
        if count == 0 {
            empty_token[0] = true;
        }
        let key = self.column_features[key_index].as_slice();
        for mut row in matrix.outer_iter_mut() {
            let row = row.as_slice_mut().expect("standard layout");
            row[CHART_BLOCK..CHART_BLOCK + FEATURE_DIM].copy_from_slice(key);
            row[CHART_BLOCK + FEATURE_DIM..].copy_from_slice(&self.context);
        }
        Ok(DashboardFeatures {
            matrix,
            row_is_empty_token: empty_token,
            truncated_context: self.truncated,
            empty_field,
        })
    }
}
