//! The work behind each subcommand, kept apart from argument parsing so it
//! can be tested directly.

use anyhow::{bail, Context, Result};
use dashgen_core::agent::{load_checkpoint, save_checkpoint, NetworkParams};
use dashgen_core::data::load_dataset_from_path;
use dashgen_core::env::{head_arities, PreparedDataset};
use dashgen_core::insight::InsightConfig;
use dashgen_core::service::{generate, GenerateConfig, Topic};
use dashgen_core::train::{evaluate, train_runs, GenerationStats, RolloutConfig, TrainConfig, Variant};
use dashgen_core::EnvConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub fn prepare(path: &Path) -> Result<Arc<PreparedDataset>> {
    let dataset = load_dataset_from_path(path).with_context(|| format!("loading {}", path.display()))?;
    if dataset.is_truncated() {
        tracing::warn!(dataset = %dataset.name, "only the first columns are visible to the agent");
    }
    Ok(PreparedDataset::new(dataset, InsightConfig::default()))
}

pub fn prepare_all(paths: &[PathBuf]) -> Result<Vec<Arc<PreparedDataset>>> {
    paths.iter().map(|p| prepare(p)).collect()
}

/// Loads trained parameters, or initializes an untrained network (with a
/// warning) when no checkpoint is given.
pub fn load_params(checkpoint: Option<&Path>, train: &TrainConfig) -> Result<NetworkParams> {
    let n_max = train.env.reward.n_max;
    match checkpoint {
        Some(path) => {
            let params = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            if params.shape.arities != head_arities(n_max) {
                bail!("{} was trained for a different chart limit than n_max = {n_max}", path.display());
            }
            Ok(params)
        }
        None => {
            tracing::warn!("no checkpoint given; generating with an untrained network");
            let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
            Ok(NetworkParams::init(train.shape(), &mut rng))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub variant: Variant,
    pub seed: u64,
    pub episodes: usize,
    /// Mean return over the first and the last tenth of the step budget.
    pub first_mean: Option<f64>,
    pub final_mean: Option<f64>,
    pub aborted: Option<String>,
    pub checkpoint: PathBuf,
}

/// Trains `config.run_count` runs and writes, under `out`, one checkpoint and
/// return curve per run plus the aggregated curve of the variant.
pub fn train_command(config: &TrainConfig, datasets: &[Arc<PreparedDataset>], out: &Path) -> Result<Vec<RunReport>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (runs, summary) = train_runs(config, datasets)?;
    let variant = config.variant;
    let mut reports = Vec::new();
    for (params, curve) in &runs {
        let stem = format!("{variant}-seed{}", curve.seed);
        let checkpoint = out.join(format!("{stem}.ckpt"));
        save_checkpoint(params, &checkpoint)?;
        curve.write_csv(fs::File::create(out.join(format!("{stem}-curve.csv")))?)?;
        reports.push(RunReport {
            variant,
            seed: curve.seed,
            episodes: curve.episodes.len(),
            first_mean: curve.window_mean(0.0, 0.1),
            final_mean: curve.window_mean(0.9, 1.0),
            aborted: curve.aborted.clone(),
            checkpoint,
        });
    }
    summary.write_csv(fs::File::create(out.join(format!("{variant}-summary.csv")))?)?;
    fs::write(
        out.join(format!("{variant}-curve.json")),
        serde_json::to_vec_pretty(&summary.to_plot_json())?,
    )?;
    Ok(reports)
}

/// Trains every variant under the same configuration and writes a combined
/// plot file `ablation.json` next to the per-variant outputs.
pub fn ablate_command(
    config: &TrainConfig,
    variants: &[Variant],
    datasets: &[Arc<PreparedDataset>],
    out: &Path,
) -> Result<Vec<RunReport>> {
    let mut reports = Vec::new();
    let mut plots = serde_json::Map::new();
    for &variant in variants {
        let cfg = TrainConfig {
            variant,
            ..config.clone()
        };
        tracing::info!(%variant, runs = cfg.run_count, "training variant");
        reports.extend(train_command(&cfg, datasets, out)?);
        let plot: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join(format!("{variant}-curve.json")))?)?;
        plots.insert(variant.name().to_string(), plot);
    }
    fs::write(out.join("ablation.json"), serde_json::to_vec_pretty(&plots)?)?;
    Ok(reports)
}

pub fn generate_command(
    params: &NetworkParams,
    data: &Arc<PreparedDataset>,
    env: &EnvConfig,
    config: &GenerateConfig,
) -> Result<Vec<Topic>> {
    Ok(generate(params, data, env, config)?)
}

pub fn eval_command(
    params: &NetworkParams,
    datasets: &[Arc<PreparedDataset>],
    config: &RolloutConfig,
) -> Result<GenerationStats> {
    Ok(evaluate(params, datasets, config)?)
}
