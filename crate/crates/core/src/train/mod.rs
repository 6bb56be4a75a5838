//! Training: asynchronous actor-critic workers, the ablation variants, return
//! curves and generation statistics.

mod a3c;
mod curve;
mod dqn;
mod eval;

pub use a3c::ParamStore;
pub use curve::{aggregate_curves, CurvePoint, CurveSummary, ReturnCurve, SummaryPoint};
pub use dqn::{ReplayMemory, Transition};
pub use eval::{
    evaluate, rollout, DatasetStats, GeneratedDashboard, GenerationStats, MeanStd, RolloutConfig, Sampling,
};

use crate::agent::{AdamConfig, LossCoefficients, NetworkParams, NetworkShape};
use crate::env::{EnvConfig, MaskMode, PreparedDataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Fused classification blocks with grammar masks.
    #[default]
    Full,
    /// Blocks read only the shared embedding; masks kept.
    IndependentHeads,
    /// Structural masks only; invalid decisions are penalized.
    Penalty,
    /// Q-value heads trained by temporal differences from replay memory.
    Dqn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::IndependentHeads, Variant::Penalty, Variant::Dqn];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::IndependentHeads => "independent_heads",
            Variant::Penalty => "penalty",
            Variant::Dqn => "dqn",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown variant {0:?} (expected full, ind, pen or dqn)")]
pub struct UnknownVariant(pub String);

impl FromStr for Variant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "full" => Ok(Variant::Full),
            "ind" | "independent" | "independent_heads" => Ok(Variant::IndependentHeads),
            "pen" | "penalty" => Ok(Variant::Penalty),
            "dqn" => Ok(Variant::Dqn),
            other => Err(UnknownVariant(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Learner {
    ActorCritic,
    QLearning,
}

/// How a variant changes the network, the environment and the learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantWiring {
    pub independent_heads: bool,
    pub mask_mode: MaskMode,
    pub learner: Learner,
}

pub fn make_variant(tag: &str) -> Result<VariantWiring, UnknownVariant> {
    Ok(tag.parse::<Variant>()?.wiring())
}

impl Variant {
    pub fn wiring(self) -> VariantWiring {
        let (independent_heads, mask_mode, learner) = match self {
            Variant::Full => (false, MaskMode::Grammar, Learner::ActorCritic),
            Variant::IndependentHeads => (true, MaskMode::Grammar, Learner::ActorCritic),
            Variant::Penalty => (false, MaskMode::Structural, Learner::ActorCritic),
            Variant::Dqn => (false, MaskMode::Grammar, Learner::QLearning),
        };
        VariantWiring {
            independent_heads,
            mask_mode,
            learner,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSizes {
    pub hidden: usize,
    pub embed: usize,
}

impl Default for NetworkSizes {
    fn default() -> Self {
        Self { hidden: 128, embed: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub gamma: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Environment steps between minibatch updates.
    pub train_every: usize,
    /// Updates between target-network refreshes.
    pub target_sync: usize,
    pub warmup: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the step budget over which epsilon decays linearly.
    pub epsilon_decay: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            replay_capacity: 10_000,
            batch_size: 16,
            train_every: 4,
            target_sync: 250,
            warmup: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.5,
        }
    }
}

/// What a step budget counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepUnit {
    #[default]
    Environment,
    Update,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub step_unit: StepUnit,
    pub worker_count: usize,
    pub datasets: Vec<PathBuf>,
    pub seed: u64,
    /// Episodes a worker runs on one parameter snapshot before refreshing it.
    pub sync_interval: usize,
    pub variant: Variant,
    pub env: EnvConfig,
    pub network: NetworkSizes,
    pub adam: AdamConfig,
    pub loss: LossCoefficients,
    pub dqn: DqnConfig,
    pub run_count: usize,
    /// Global steps between curve points.
    pub log_interval: u64,
    pub shuffle_charts: bool,
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 500_000,
            step_unit: StepUnit::Environment,
            worker_count: 4,
            datasets: Vec::new(),
            seed: 0,
            sync_interval: 1,
            variant: Variant::Full,
            env: EnvConfig::default(),
            network: NetworkSizes::default(),
            adam: AdamConfig::default(),
            loss: LossCoefficients::default(),
            dqn: DqnConfig::default(),
            run_count: 1,
            log_interval: 1000,
            shuffle_charts: true,
            checkpoint_dir: None,
            checkpoint_every: 50_000,
        }
    }
}

impl TrainConfig {
    pub fn shape(&self) -> NetworkShape {
        NetworkShape::new(
            self.network.hidden,
            self.network.embed,
            self.env.reward.n_max,
            self.variant.wiring().independent_heads,
        )
    }

    /// The environment configuration with the variant's masking applied.
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            mask_mode: self.variant.wiring().mask_mode,
            ..self.env
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("total_steps must be positive")]
    NoSteps,
    #[error("no datasets to train on")]
    NoDatasets,
    #[error("worker_count must be positive")]
    NoWorkers,
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Checkpoint(#[from] crate::agent::CheckpointError),
}

/// Trains one run. Non-finite losses abort the run early; the reason is kept
/// in the curve.
pub fn train(
    config: &TrainConfig,
    datasets: &[Arc<PreparedDataset>],
) -> Result<(NetworkParams, ReturnCurve), TrainError> {
    if config.total_steps == 0 {
        return Err(TrainError::NoSteps);
    }
    if datasets.is_empty() {
        return Err(TrainError::NoDatasets);
    }
    if config.worker_count == 0 {
        return Err(TrainError::NoWorkers);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = NetworkParams::init(config.shape(), &mut rng);
    match config.variant.wiring().learner {
        Learner::ActorCritic => a3c::train_actor_critic(config, datasets, params),
        Learner::QLearning => dqn::train_dqn(config, datasets, params),
    }
}

/// Runs `config.run_count` seeded runs (seeds `seed, seed + 1, ...`) and
/// aggregates their curves.
pub fn train_runs(
    config: &TrainConfig,
    datasets: &[Arc<PreparedDataset>],
) -> Result<(Vec<(NetworkParams, ReturnCurve)>, CurveSummary), TrainError> {
    let mut runs = Vec::with_capacity(config.run_count.max(1));
    for r in 0..config.run_count.max(1) {
        let cfg = TrainConfig {
            seed: config.seed + r as u64,
            ..config.clone()
        };
        runs.push(train(&cfg, datasets)?);
    }
    let summary = aggregate_curves(&runs.iter().map(|(_, c)| c.clone()).collect::<Vec<_>>());
    Ok((runs, summary))
}

/// Per-worker random source derived from the run seed.
pub(crate) fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64 + 1);
    rng
}

#[cfg(test)]
mod tests;
