//! Fixed-length statistical descriptors of a column or of a transformed series.
//!
//! Slot layout (`FEATURE_DIM` = 20):
//!
//! | slot | feature |
//! |------|---------|
//! | 0..3 | type one-hot (quantitative, nominal, temporal) |
//! | 3    | row count, `ln(1 + n)` |
//! | 4    | missing ratio |
//! | 5    | cardinality, `ln(1 + distinct)` |
//! | 6    | cardinality ratio (distinct / non-missing) |
//! | 7..12| min, max, mean, median, std (signed log scaled) |
//! | 12   | skewness |
//! | 13   | excess kurtosis |
//! | 14   | Gini impurity of the value distribution |
//! | 15   | entropy normalized by `ln(distinct)` |
//! | 16   | monotonic flag |
//! | 17   | fraction of non-decreasing adjacent pairs |
//! | 18   | outlier ratio (1.5 IQR fences) |
//! | 19   | least-squares slope against row index (signed log scaled) |
//!
//! Quantitative columns take moments over their values. Nominal and temporal
//! columns take moments over per-category frequency counts; temporal min/max use
//! epoch seconds. Variances are population variances. Undefined statistics are 0
//! and every slot is clipped to `[-10, 10]`.

use super::{Cell, ColumnProfile, ColumnType, Dataset};
use crate::chart::transform::derive_series;
use crate::chart::{ChartError, Encoding};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const FEATURE_DIM: usize = 20;
pub const CLIP: f64 = 10.0;

pub mod slot {
    pub const TYPE_Q: usize = 0;
    pub const TYPE_N: usize = 1;
    pub const TYPE_T: usize = 2;
    pub const ROWS: usize = 3;
    pub const MISSING: usize = 4;
    pub const CARDINALITY: usize = 5;
    pub const CARDINALITY_RATIO: usize = 6;
    pub const MIN: usize = 7;
    pub const MAX: usize = 8;
    pub const MEAN: usize = 9;
    pub const MEDIAN: usize = 10;
    pub const STD: usize = 11;
    pub const SKEWNESS: usize = 12;
    pub const KURTOSIS: usize = 13;
    pub const GINI: usize = 14;
    pub const ENTROPY: usize = 15;
    pub const MONOTONIC: usize = 16;
    pub const SORTEDNESS: usize = 17;
    pub const OUTLIERS: usize = 18;
    pub const SLOPE: usize = 19;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnFeatures(pub [f64; FEATURE_DIM]);

impl ColumnFeatures {
    pub fn zeros() -> Self {
        Self([0.0; FEATURE_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.0[slot]
    }

    /// Distinct-value count decoded from its log slot.
    pub fn cardinality(&self) -> f64 {
        self.0[slot::CARDINALITY].exp_m1()
    }
}

/// Features of an encoded field after its rendering transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldFeatures {
    pub features: ColumnFeatures,
    /// Set when the transform produced no rows; `features` is then all zeros.
    pub empty: bool,
}

fn signed_log(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

fn finite_clip(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(-CLIP, CLIP)
    } else {
        0.0
    }
}

struct Moments {
    min: f64,
    max: f64,
    mean: f64,
    median: f64,
    std: f64,
    skewness: f64,
    kurtosis: f64,
}

fn moments(values: &[f64]) -> Moments {
    if values.is_empty() {
        return Moments {
            min: 0.0,
            max: 0.0,
            mean: 0.0,
            median: 0.0,
            std: 0.0,
            skewness: 0.0,
            kurtosis: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Relative guard: float noise on a constant column must not produce moments.
    let degenerate = m2 == 0.0 || m2 <= (mean.abs() * 1e-12).powi(2);
    Moments {
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        mean,
        median: quantile(&sorted, 0.5),
        std: if degenerate { 0.0 } else { m2.sqrt() },
        skewness: if degenerate { 0.0 } else { m3 / m2.powf(1.5) },
        kurtosis: if degenerate { 0.0 } else { m4 / (m2 * m2) - 3.0 },
    }
}

/// Linear-interpolated quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn outlier_ratio(values: &[f64]) -> f64 {
    if values.len() < 4 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    values.iter().filter(|v| **v < lo || **v > hi).count() as f64 / values.len() as f64
}

fn slope(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean_x = (n - 1) as f64 / 2.0;
    let mean_y = values.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Features of an arbitrary typed series; `values.len()` is the row count.
pub fn series_features(ctype: ColumnType, values: &[Cell]) -> ColumnFeatures {
    let mut f = [0.0; FEATURE_DIM];
    match ctype {
        ColumnType::Quantitative => f[slot::TYPE_Q] = 1.0,
        ColumnType::Nominal => f[slot::TYPE_N] = 1.0,
        ColumnType::Temporal => f[slot::TYPE_T] = 1.0,
    }
    let rows = values.len();
    f[slot::ROWS] = (rows as f64).ln_1p();
    let present: Vec<&Cell> = values.iter().filter(|c| !c.is_missing()).collect();
    if rows > 0 {
        f[slot::MISSING] = (rows - present.len()) as f64 / rows as f64;
    }
    if present.is_empty() {
        return ColumnFeatures(f.map(finite_clip));
    }

    let mut counts: BTreeMap<&Cell, usize> = BTreeMap::new();
    for c in &present {
        *counts.entry(*c).or_default() += 1;
    }
    let n = present.len() as f64;
    let distinct = counts.len();
    f[slot::CARDINALITY] = (distinct as f64).ln_1p();
    f[slot::CARDINALITY_RATIO] = distinct as f64 / n;

    let probs: Vec<f64> = counts.values().map(|c| *c as f64 / n).collect();
    f[slot::GINI] = 1.0 - probs.iter().map(|p| p * p).sum::<f64>();
    if distinct > 1 {
        let h: f64 = -probs.iter().map(|p| p * p.ln()).sum::<f64>();
        f[slot::ENTROPY] = h / (distinct as f64).ln();
    }

    let frequencies: Vec<f64> = counts.values().map(|c| *c as f64).collect();
    let ordered: Vec<f64> = present.iter().filter_map(|c| c.as_f64()).collect();
    let (moment_source, min_max_source): (&[f64], &[f64]) = match ctype {
        ColumnType::Quantitative => (&ordered, &ordered),
        ColumnType::Temporal => (&frequencies, &ordered),
        ColumnType::Nominal => (&frequencies, &frequencies),
    };
    let m = moments(moment_source);
    let (min, max) = if min_max_source.is_empty() {
        (m.min, m.max)
    } else {
        let mm = moments(min_max_source);
        (mm.min, mm.max)
    };
    f[slot::MIN] = signed_log(min);
    f[slot::MAX] = signed_log(max);
    f[slot::MEAN] = signed_log(m.mean);
    f[slot::MEDIAN] = signed_log(m.median);
    f[slot::STD] = signed_log(m.std);
    f[slot::SKEWNESS] = m.skewness;
    f[slot::KURTOSIS] = m.kurtosis;

    // Order features follow row order: numbers and dates by value, text lexically.
    let pairs = present.len().saturating_sub(1);
    let non_decreasing = present.windows(2).filter(|w| w[0] <= w[1]).count();
    let non_increasing = present.windows(2).filter(|w| w[0] >= w[1]).count();
    f[slot::MONOTONIC] = if non_decreasing == pairs || non_increasing == pairs {
        1.0
    } else {
        0.0
    };
    f[slot::SORTEDNESS] = if pairs == 0 {
        1.0
    } else {
        non_decreasing as f64 / pairs as f64
    };

    let spread_source: &[f64] = match ctype {
        ColumnType::Nominal => &frequencies,
        _ => &ordered,
    };
    f[slot::OUTLIERS] = outlier_ratio(spread_source);
    if ctype != ColumnType::Nominal {
        f[slot::SLOPE] = signed_log(slope(&ordered));
    }
    ColumnFeatures(f.map(finite_clip))
}

pub fn compute_column_features(col: &ColumnProfile) -> ColumnFeatures {
    series_features(col.ctype, &col.values)
}

/// Features of `encoding`'s data as rendered next to `peer_encodings`: group-by
/// keys come from non-aggregated peers and aggregates are applied. With no
/// aggregation anywhere the raw column is described.
pub fn compute_field_features(
    dataset: &Dataset,
    encoding: &Encoding,
    peer_encodings: &[Encoding],
) -> Result<FieldFeatures, ChartError> {
    let mut encodings = Vec::with_capacity(1 + peer_encodings.len());
    encodings.push(encoding.clone());
    encodings.extend(peer_encodings.iter().cloned());
    let derived = derive_series(dataset, &encodings, None)?;
    Ok(field_features_of(&derived.columns[0]))
}

pub(crate) fn field_features_of(series: &(ColumnType, Vec<Cell>)) -> FieldFeatures {
    if series.1.is_empty() {
        FieldFeatures {
            features: ColumnFeatures::zeros(),
            empty: true,
        }
    } else {
        FieldFeatures {
            features: series_features(series.0, &series.1),
            empty: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn nums(v: &[f64]) -> ColumnProfile {
        ColumnProfile::new(
            "v",
            ColumnType::Quantitative,
            v.iter().map(|x| Cell::Num(*x)).collect(),
        )
    }

    fn texts(v: &[&str]) -> ColumnProfile {
        ColumnProfile::new(
            "t",
            ColumnType::Nominal,
            v.iter().map(|x| Cell::Text(x.to_string())).collect(),
        )
    }

    #[test]
    fn constant_column() {
        let f = compute_column_features(&nums(&[5.0, 5.0, 5.0, 5.0]));
        assert_eq!(f.get(slot::STD), 0.0);
        assert_eq!(f.cardinality(), 1.0);
        assert_eq!(f.get(slot::GINI), 0.0);
        assert_eq!(f.get(slot::SKEWNESS), 0.0);
    }

    #[test]
    fn two_balanced_categories() {
        let f = compute_column_features(&texts(&["a", "a", "b", "b"]));
        assert_abs_diff_eq!(f.get(slot::GINI), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.get(slot::ENTROPY), 1.0, epsilon = 1e-15);
        assert_eq!(f.get(slot::TYPE_N), 1.0);
    }

    #[test]
    fn uniform_ramp() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let f = compute_column_features(&nums(&v));
        assert_eq!(f.get(slot::MONOTONIC), 1.0);
        assert_eq!(f.get(slot::SORTEDNESS), 1.0);
        assert_abs_diff_eq!(f.get(slot::SKEWNESS), 0.0, epsilon = 1e-9);
        // population kurtosis of a discrete uniform ramp: -6(n^2+1)/(5(n^2-1))
        let n2 = 100.0f64 * 100.0;
        assert_abs_diff_eq!(
            f.get(slot::KURTOSIS),
            -6.0 * (n2 + 1.0) / (5.0 * (n2 - 1.0)),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(f.get(slot::SLOPE), 1.0f64.ln_1p(), epsilon = 1e-12);
        assert_abs_diff_eq!(f.get(slot::MEDIAN), 50.5f64.ln_1p(), epsilon = 1e-12);
    }

    #[test]
    fn missing_values_are_excluded() {
        let col = ColumnProfile::new(
            "v",
            ColumnType::Quantitative,
            vec![Cell::Num(1.0), Cell::Missing, Cell::Num(3.0), Cell::Missing],
        );
        let f = compute_column_features(&col);
        assert_eq!(f.get(slot::MISSING), 0.5);
        assert_abs_diff_eq!(f.get(slot::MEAN), 2.0f64.ln_1p(), epsilon = 1e-15);
    }

    #[test]
    fn outliers_and_clipping() {
        let mut v = vec![1.0; 20];
        v.push(1e30);
        let f = compute_column_features(&nums(&v));
        assert_abs_diff_eq!(f.get(slot::OUTLIERS), 1.0 / 21.0, epsilon = 1e-15);
        assert_eq!(f.get(slot::MAX), CLIP);
        assert!(f.as_slice().iter().all(|x| x.abs() <= CLIP));
    }

    #[test]
    fn all_missing_column_is_finite() {
        let col = ColumnProfile::new("v", ColumnType::Nominal, vec![Cell::Missing; 3]);
        let f = compute_column_features(&col);
        assert!(f.as_slice().iter().all(|x| x.is_finite()));
        assert_eq!(f.get(slot::MISSING), 1.0);
        assert_eq!(f.cardinality(), 0.0);
    }

    #[test]
    fn temporal_min_max_use_epoch_seconds() {
        let col = ColumnProfile::new(
            "d",
            ColumnType::Temporal,
            vec![Cell::Date(100), Cell::Date(200), Cell::Date(200)],
        );
        let f = compute_column_features(&col);
        assert_abs_diff_eq!(f.get(slot::MIN), 100f64.ln_1p(), epsilon = 1e-12);
        assert_abs_diff_eq!(f.get(slot::MAX), 200f64.ln_1p(), epsilon = 1e-12);
        // mean of category counts {1, 2}
        assert_abs_diff_eq!(f.get(slot::MEAN), 1.5f64.ln_1p(), epsilon = 1e-12);
    }
}
