//! Dashboard generation as a sequential decision problem.
//!
//! A dataset is profiled into typed columns, an agent builds a dashboard chart by
//! chart (adding, removing, or re-keying charts), and every intermediate dashboard
//! is scored by presentation and insight rewards. The agent is a bidirectional
//! recurrent actor-critic with masked, sequentially-conditioned classification
//! heads, trained with asynchronous advantage actor-critic workers.
//!
//! Module map:
//!
//! * [`data`]: CSV loading, column type inference, hand-crafted column features.
//! * [`chart`]: chart/dashboard types, validity grammar, transforms, render specs.
//! * [`insight`]: single-, double- and multi-chart insight detection.
//! * [`reward`]: diversity, parsimony and insight rewards.
//! * [`env`]: the decision process: masks, transitions, episodes.
//! * [`encode`]: dashboard feature matrices fed to the network.
//! * [`agent`]: policy/value network, sampling, loss and gradients.
//! * [`train`]: asynchronous training, ablation variants, evaluation.
//! * [`layout`]: rule-based grid placement and text statistics.
//! * [`service`]: generation, recommendation, diffs, sessions and persistence.

pub mod agent;
pub mod chart;
pub mod config;
pub mod data;
pub mod encode;
pub mod env;
pub mod insight;
pub mod layout;
pub mod reward;
pub mod service;
pub mod train;

pub use agent::{NetworkParams, NetworkShape, PolicyOutput};
pub use chart::{Aggregate, ChartSpec, DashboardState, Encoding, Limit, LimitDirection, Mark};
pub use config::{ConfigError, EngineConfig, ServerConfig};
pub use data::{Cell, ColumnFeatures, ColumnProfile, ColumnType, Dataset};
pub use env::{ActionDecision, ActionKind, EnvConfig, Environment, Head, PreparedDataset, StepResult};
pub use insight::{InsightKind, InsightRecord};
pub use reward::{RewardBreakdown, RewardConfig};
pub use service::{GenerateConfig, RecommendConfig, Topic};
pub use train::{TrainConfig, Variant};
