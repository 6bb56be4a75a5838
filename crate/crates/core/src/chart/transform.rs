//! Group-by/aggregate/bin/limit transforms that turn a chart into the table it draws.

use super::{Aggregate, ChartError, ChartSpec, Channel, Limit, LimitDirection};
use crate::data::{Cell, ColumnProfile, ColumnType, Dataset};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Upper bound on bins, matching the renderer's default for positional channels.
pub const MAX_BINS: usize = 10;

/// Equal-width bins with a "nice" step (1, 2 or 5 times a power of ten).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinParams {
    pub start: f64,
    pub step: f64,
}

impl BinParams {
    pub fn for_values(values: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        let span = hi - lo;
        let step = if span <= 0.0 {
            1.0
        } else {
            let raw = span / MAX_BINS as f64;
            let magnitude = 10f64.powf(raw.log10().floor());
            [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * magnitude)
                .find(|s| span / s <= MAX_BINS as f64)
                .unwrap_or(10.0 * magnitude)
        };
        Some(Self {
            start: (lo / step).floor() * step,
            step,
        })
    }

    pub fn bin(&self, v: f64) -> f64 {
        self.start + ((v - self.start) / self.step).floor() * self.step
    }
}

/// The table a chart renders: one column per encoded channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedTable {
    pub channels: Vec<Channel>,
    pub types: Vec<ColumnType>,
    pub columns: Vec<Vec<Cell>>,
}

impl RenderedTable {
    pub fn row_count(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, channel: Channel) -> Option<&[Cell]> {
        self.channels
            .iter()
            .position(|c| *c == channel)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.row_count() == 0
    }
}

pub(crate) struct DerivedTable {
    pub columns: Vec<(ColumnType, Vec<Cell>)>,
}

#[derive(Default, Clone)]
struct Accumulator {
    rows: usize,
    n: usize,
    sum: f64,
    min: f64,
    max: f64,
}

impl Accumulator {
    fn push(&mut self, v: Option<f64>) {
        self.rows += 1;
        if let Some(v) = v {
            if self.n == 0 {
                self.min = v;
                self.max = v;
            } else {
                self.min = self.min.min(v);
                self.max = self.max.max(v);
            }
            self.n += 1;
            self.sum += v;
        }
    }

    fn finish(&self, aggregate: Aggregate) -> Cell {
        if aggregate == Aggregate::Count {
            return Cell::Num(self.rows as f64);
        }
        if self.n == 0 {
            return Cell::Missing;
        }
        Cell::Num(match aggregate {
            Aggregate::Mean => self.sum / self.n as f64,
            Aggregate::Sum => self.sum,
            Aggregate::Min => self.min,
            Aggregate::Max => self.max,
            _ => unreachable!("not a measure"),
        })
    }
}

fn resolve<'a>(
    dataset: &'a Dataset,
    encodings: &[super::Encoding],
) -> Result<Vec<&'a ColumnProfile>, ChartError> {
    encodings
        .iter()
        .map(|e| {
            dataset
                .column(&e.column)
                .ok_or_else(|| ChartError::UnknownColumn(e.column.clone()))
        })
        .collect()
}

/// Core transform shared by rendering and field features.
///
/// Without any aggregate the raw columns are returned untouched (missing cells
/// included, dataset order). Otherwise raw and binned encodings are group keys
/// (rows with a missing key are skipped), the rest are measures, groups come out
/// sorted by key, and groups with an undefined measure are dropped. A limit then
/// keeps the `k` largest (top) or smallest (bottom) groups by the first measure.
pub(crate) fn derive_series(
    dataset: &Dataset,
    encodings: &[super::Encoding],
    limit: Option<Limit>,
) -> Result<DerivedTable, ChartError> {
    let cols = resolve(dataset, encodings)?;
    if encodings.iter().all(|e| e.aggregate == Aggregate::None) {
        return Ok(DerivedTable {
            columns: cols.iter().map(|c| (c.ctype, c.values.clone())).collect(),
        });
    }

    let key_positions: Vec<usize> = (0..encodings.len())
        .filter(|i| encodings[*i].aggregate.is_group_key())
        .collect();
    let measure_positions: Vec<usize> = (0..encodings.len())
        .filter(|i| !encodings[*i].aggregate.is_group_key())
        .collect();
    let bins: Vec<Option<BinParams>> = encodings
        .iter()
        .zip(&cols)
        .map(|(e, c)| {
            (e.aggregate == Aggregate::Bin)
                .then(|| BinParams::for_values(c.numeric_values()))
                .flatten()
        })
        .collect();

    let mut groups: BTreeMap<Vec<Cell>, Vec<Accumulator>> = BTreeMap::new();
    'rows: for row in 0..dataset.row_count {
        let mut key = Vec::with_capacity(key_positions.len());
        for &p in &key_positions {
            let cell = &cols[p].values[row];
            let cell = match (bins[p], cell) {
                (_, Cell::Missing) => continue 'rows,
                (Some(b), c) => match c.as_f64() {
                    Some(v) => Cell::Num(b.bin(v)),
                    None => continue 'rows,
                },
                (None, c) => c.clone(),
            };
            key.push(cell);
        }
        let accs = groups
            .entry(key)
            .or_insert_with(|| vec![Accumulator::default(); measure_positions.len()]);
        for (acc, &p) in accs.iter_mut().zip(&measure_positions) {
            acc.push(cols[p].values[row].as_f64());
        }
    }

    let mut rows: Vec<Vec<Cell>> = Vec::with_capacity(groups.len());
    for (key, accs) in groups {
        let measures: Vec<Cell> = accs
            .iter()
            .zip(&measure_positions)
            .map(|(a, &p)| a.finish(encodings[p].aggregate))
            .collect();
        if measures.iter().any(Cell::is_missing) {
            continue;
        }
        let mut row = vec![Cell::Missing; encodings.len()];
        for (cell, &p) in key.into_iter().zip(&key_positions) {
            row[p] = cell;
        }
        for (cell, &p) in measures.into_iter().zip(&measure_positions) {
            row[p] = cell;
        }
        rows.push(row);
    }

    if let (Some(limit), Some(&m)) = (limit, measure_positions.first()) {
        // Stable sort keeps group-key order among ties.
        match limit.direction {
            LimitDirection::Top => rows.sort_by(|a, b| b[m].cmp(&a[m])),
            LimitDirection::Bottom => rows.sort_by(|a, b| a[m].cmp(&b[m])),
        }
        rows.truncate(limit.k);
    }

    let types: Vec<ColumnType> = encodings
        .iter()
        .zip(&cols)
        .map(|(e, c)| match e.aggregate {
            Aggregate::None => c.ctype,
            _ => ColumnType::Quantitative,
        })
        .collect();
    let mut columns: Vec<(ColumnType, Vec<Cell>)> = types
        .into_iter()
        .map(|t| (t, Vec::with_capacity(rows.len())))
        .collect();
    for row in rows {
        for (col, cell) in columns.iter_mut().zip(row) {
            col.1.push(cell);
        }
    }
    Ok(DerivedTable { columns })
}

/// Produces the table a chart draws. Expects a valid spec; only unknown columns
/// are reported. An empty result is returned as an empty table.
pub fn apply_transform(dataset: &Dataset, spec: &ChartSpec) -> Result<RenderedTable, ChartError> {
    let (channels, encodings): (Vec<Channel>, Vec<super::Encoding>) =
        spec.channels().map(|(c, e)| (c, e.clone())).unzip();
    let derived = derive_series(dataset, &encodings, spec.limit)?;
    let (types, columns) = derived.columns.into_iter().unzip();
    Ok(RenderedTable {
        channels,
        types,
        columns,
    })
}
