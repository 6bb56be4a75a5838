//! Quota-bounded rollouts and generation statistics.

use crate::agent::{greedy_decision, sample_decision, NetworkParams};
use crate::chart::{ChartSpec, DashboardState};
use crate::env::{ActionKind, EnvConfig, EnvError, Environment, PreparedDataset};
use crate::insight::InsightRecord;
use crate::reward::RewardBreakdown;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Stochastic,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    /// Total environment steps across all episodes.
    pub quota: usize,
    pub sampling: Sampling,
    pub seed: u64,
    pub env: EnvConfig,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            quota: 1000,
            sampling: Sampling::Stochastic,
            seed: 0,
            env: EnvConfig::default(),
        }
    }
}

/// The final dashboard of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDashboard {
    pub key_column: String,
    pub state: DashboardState,
    pub episode_return: f64,
    pub breakdown: RewardBreakdown,
    pub insights: Vec<InsightRecord>,
    pub steps: usize,
    /// Every chart an add decision produced during the episode, in order.
    pub added: Vec<ChartSpec>,
    /// True if the quota ran out before the episode ended.
    pub truncated: bool,
}

/// Runs episodes until `quota` steps are spent. Episodes start from `start`
/// when given, otherwise from empty dashboards whose key rotates over the
/// columns. The first episode always runs to completion.
pub fn rollout(
    params: &NetworkParams,
    data: &Arc<PreparedDataset>,
    start: Option<&DashboardState>,
    config: &RolloutConfig,
) -> Result<Vec<GeneratedDashboard>, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut env = Environment::new(data.clone(), config.env);
    let mut out = Vec::new();
    let mut used = 0;
    while used < config.quota || out.is_empty() {
        env.reset(start.cloned(), None)?;
        let initial_cr = env.breakdown().cr;
        let mut added = Vec::new();
        let mut steps = 0;
        let mut truncated = false;
        loop {
            if used >= config.quota && !out.is_empty() {
                truncated = true;
                break;
            }
            let x = data.encoder.encode(env.state(), env.dataset())?;
            let output = params.forward(&x.matrix).output;
            let masks = env.masks();
            let chosen = match config.sampling {
                Sampling::Stochastic => sample_decision(&output, &masks, &mut rng),
                Sampling::Greedy => greedy_decision(&output, &masks),
            };
            let before = env.state().charts.len();
            let result = env.step(&chosen.decision)?;
            used += 1;
            steps += 1;
            if chosen.decision.action == ActionKind::Add && result.state.charts.len() > before {
                added.push(result.state.charts.last().expect("just added").clone());
            }
            if result.done {
                break;
            }
        }
        out.push(GeneratedDashboard {
            key_column: env.state().key_column.clone(),
            state: env.state().clone(),
            episode_return: env.breakdown().cr - initial_cr,
            breakdown: *env.breakdown(),
            insights: env.insights().to_vec(),
            steps,
            added,
            truncated,
        });
        if truncated {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics; zeros for an empty sample.
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dataset: String,
    pub dashboards: usize,
    pub charts: MeanStd,
    pub chart_types: MeanStd,
    pub episode_return: MeanStd,
    pub wall_seconds: f64,
    /// Charts that fail validation; zero whenever masks are sound.
    pub invalid_charts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub per_dataset: Vec<DatasetStats>,
    /// Pooled over every dashboard of every dataset.
    pub charts: MeanStd,
    pub chart_types: MeanStd,
    pub episode_return: MeanStd,
    /// Mean and spread of the per-dataset wall times.
    pub wall_seconds: MeanStd,
    pub invalid_charts: usize,
}

/// Generates under `config.quota` steps on every dataset and summarizes the
/// finished dashboards.
pub fn evaluate(
    params: &NetworkParams,
    datasets: &[Arc<PreparedDataset>],
    config: &RolloutConfig,
) -> Result<GenerationStats, EnvError> {
    let mut per_dataset = Vec::new();
    let mut all = Vec::new();
    for data in datasets {
        let t = Instant::now();
        let mut dashboards = rollout(params, data, None, config)?;
        let wall_seconds = t.elapsed().as_secs_f64();
        // A dashboard cut off by the quota is unfinished; the first one never is.
        dashboards.retain(|d| !d.truncated);
        let mut invalid = 0;
        for d in &dashboards {
            invalid += d
                .state
                .validate(&data.dataset, config.env.reward.n_max)?
                .len();
        }
        per_dataset.push(DatasetStats {
            dataset: data.dataset.name.clone(),
            dashboards: dashboards.len(),
            charts: MeanStd::of(dashboards.iter().map(|d| d.state.charts.len() as f64)),
            chart_types: MeanStd::of(dashboards.iter().map(|d| d.state.mark_types().len() as f64)),
            episode_return: MeanStd::of(dashboards.iter().map(|d| d.episode_return)),
            wall_seconds,
            invalid_charts: invalid,
        });
        all.extend(dashboards);
    }
    Ok(GenerationStats {
        charts: MeanStd::of(all.iter().map(|d| d.state.charts.len() as f64)),
        chart_types: MeanStd::of(all.iter().map(|d| d.state.mark_types().len() as f64)),
        episode_return: MeanStd::of(all.iter().map(|d| d.episode_return)),
        wall_seconds: MeanStd::of(per_dataset.iter().map(|d| d.wall_seconds)),
        invalid_charts: per_dataset.iter().map(|d| d.invalid_charts).sum(),
        per_dataset,
    })
}
