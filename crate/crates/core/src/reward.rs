//! Presentation and insight rewards.
//!
//! The combined score of a dashboard is
//! `cr = w1 * (dr_types + dr_columns) + w2 * pr + w3 * insight_sum`
//! and the reward of a step is the change in `cr`.

use crate::chart::{ChartError, DashboardState, Mark};
use crate::data::{Dataset, MAX_CONTEXT_COLUMNS};
use crate::insight::{detect_dashboard_insights, InsightConfig, InsightRecord};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub w_diversity: f64,
    pub w_parsimony: f64,
    pub w_insight: f64,
    pub alpha: f64,
    pub n_best: usize,
    pub n_max: usize,
    pub insight: InsightConfig,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_diversity: 0.33,
            w_parsimony: 0.33,
            w_insight: 0.1,
            alpha: 3.0,
            n_best: 5,
            n_max: 10,
            insight: InsightConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub dr_chart_types: f64,
    pub dr_columns: f64,
    pub pr: f64,
    pub insight_sum: f64,
    pub cr: f64,
    /// Change in `cr` relative to the previous state; 0 for a standalone score.
    pub r_immediate: f64,
}

/// Diminishing-returns diversity: `1 - exp(-alpha * used / total)`.
pub fn diversity_reward(c_used: usize, c_total: usize, alpha: f64) -> f64 {
    debug_assert!(c_total >= 1 && c_used <= c_total);
    1.0 - (-alpha * c_used as f64 / c_total as f64).exp()
}

/// Rises as a quarter sine up to `n_best` charts and falls back to zero at `n_max`.
pub fn parsimony_reward(n: usize, n_best: usize, n_max: usize) -> f64 {
    debug_assert!(0 < n_best && n_best < n_max);
    let n = n.min(n_max) as f64;
    let (best, max) = (n_best as f64, n_max as f64);
    if n <= best {
        (FRAC_PI_2 * n / best).sin()
    } else {
        let v = (FRAC_PI_2 * (1.0 + (n - best) / (max - best))).sin();
        // sin(pi) is 1.2e-16, not 0.
        if n == max {
            0.0
        } else {
            v
        }
    }
}

pub fn insight_reward(records: &[InsightRecord]) -> f64 {
    records.iter().map(|r| f64::from(r.reward_weight)).sum()
}

/// Combines the components for a dashboard whose insights are already known.
pub fn score_from_insights(
    state: &DashboardState,
    dataset: &Dataset,
    insights: &[InsightRecord],
    config: &RewardConfig,
) -> RewardBreakdown {
    let column_total = dataset.columns.len().clamp(1, MAX_CONTEXT_COLUMNS);
    let columns_used = state.encoded_columns().len().min(column_total);
    let dr_chart_types = diversity_reward(state.mark_types().len(), Mark::ALL.len(), config.alpha);
    let dr_columns = diversity_reward(columns_used, column_total, config.alpha);
    let pr = parsimony_reward(state.charts.len(), config.n_best, config.n_max);
    let insight_sum = insight_reward(insights);
    let cr = config.w_diversity * (dr_chart_types + dr_columns)
        + config.w_parsimony * pr
        + config.w_insight * insight_sum;
    RewardBreakdown {
        dr_chart_types,
        dr_columns,
        pr,
        insight_sum,
        cr,
        r_immediate: 0.0,
    }
}

pub fn score_dashboard(
    state: &DashboardState,
    dataset: &Dataset,
    config: &RewardConfig,
) -> Result<(RewardBreakdown, Vec<InsightRecord>), ChartError> {
    let insights = detect_dashboard_insights(state, dataset, &config.insight)?;
    Ok((score_from_insights(state, dataset, &insights, config), insights))
}

pub fn immediate_reward(prev: &RewardBreakdown, curr: &RewardBreakdown) -> f64 {
    curr.cr - prev.cr
}
