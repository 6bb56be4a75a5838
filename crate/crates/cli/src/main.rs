use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dashgen_cli::commands::{
    ablate_command, eval_command, generate_command, load_params, prepare, prepare_all, train_command, RunReport,
};
use dashgen_cli::server::{router, AppState};
use dashgen_core::service::Store;
use dashgen_core::train::{RolloutConfig, Sampling, Variant};
use dashgen_core::EngineConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "dashgen", version, about = "Generate analytical dashboards with a trained agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<EngineConfig> {
        let mut cfg = match &self.config {
            Some(path) => EngineConfig::load(path)?,
            None => EngineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
            cfg.generate.seed = seed;
            cfg.recommend.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the agent on the configured datasets.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured step budget.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        variant: Option<Variant>,
        /// Directory for checkpoints and return curves.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Generate ranked dashboards for a CSV file.
    Generate {
        csv: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        quota: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Spend the quota on every key column instead of sharing it.
        #[arg(long)]
        per_topic: bool,
        /// Pick the most likely decision instead of sampling.
        #[arg(long)]
        greedy: bool,
        /// Write the topics as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train several variants under the same settings and compare their curves.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "full,ind,pen,dqn")]
        variants: Vec<Variant>,
        #[arg(long)]
        steps: Option<u64>,
        /// Seeded runs per variant.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
    },
    /// Report generation statistics of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Datasets to evaluate on; defaults to the training datasets.
        datasets: Vec<PathBuf>,
        #[arg(long)]
        quota: Option<usize>,
        #[arg(long)]
        greedy: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_reports(reports: &[RunReport]) {
    let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    println!("variant            seed  episodes  first10%  final10%");
    for r in reports {
        println!(
            "{:<18} {:>4}  {:>8}  {:>8}  {:>8}{}",
            r.variant.name(),
            r.seed,
            r.episodes,
            fmt(r.first_mean),
            fmt(r.final_mean),
            r.aborted.as_deref().map(|a| format!("  aborted: {a}")).unwrap_or_default()
        );
    }
}

fn sampling(greedy: bool) -> Sampling {
    if greedy {
        Sampling::Greedy
    } else {
        Sampling::Stochastic
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Train {
            common,
            steps,
            variant,
            out,
        } => {
            let mut cfg = common.load()?.train;
            cfg.total_steps = steps.unwrap_or(cfg.total_steps);
            cfg.variant = variant.unwrap_or(cfg.variant);
            let datasets = prepare_all(&cfg.datasets)?;
            print_reports(&train_command(&cfg, &datasets, &out)?);
        }
        Command::Generate {
            csv,
            common,
            quota,
            checkpoint,
            per_topic,
            greedy,
            out,
        } => {
            let cfg = common.load()?;
            let params = load_params(checkpoint.as_deref(), &cfg.train)?;
            let mut gen = cfg.generate;
            gen.quota = quota.unwrap_or(gen.quota);
            gen.per_topic |= per_topic;
            if greedy {
                gen.sampling = Sampling::Greedy;
            }
            let data = prepare(&csv)?;
            let topics = generate_command(&params, &data, &cfg.train.env, &gen)?;
            for t in &topics {
                println!("topic {} ({} dashboards)", t.key_column, t.dashboards.len());
                for d in t.dashboards.iter().take(3) {
                    let marks: Vec<String> = d.state.charts.iter().map(|c| c.mark.to_string()).collect();
                    println!("  return {:.4}  charts [{}]", d.episode_return, marks.join(", "));
                }
            }
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_vec_pretty(&topics)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Serve {
            common,
            port,
            host,
            store,
            checkpoint,
        } => {
            let cfg = common.load()?;
            let mut server = cfg.server.clone();
            server.port = port.unwrap_or(server.port);
            server.host = host.unwrap_or(server.host);
            server.store_dir = store.unwrap_or(server.store_dir);
            server.checkpoint = checkpoint.or(server.checkpoint);
            let params = load_params(server.checkpoint.as_deref(), &cfg.train)?;
            let state = AppState::new(
                Store::open(&server.store_dir)?,
                params,
                cfg.train.env,
                cfg.generate,
                cfg.recommend,
                server.job_workers,
            );
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let addr = format!("{}:{}", server.host, server.port);
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                tracing::info!(%addr, store = %server.store_dir.display(), "serving");
                axum::serve(listener, router(state)).await?;
                anyhow::Ok(())
            })?;
        }
        Command::Ablate {
            common,
            variants,
            steps,
            runs,
            out,
        } => {
            let mut cfg = common.load()?.train;
            cfg.total_steps = steps.unwrap_or(cfg.total_steps);
            cfg.run_count = runs.unwrap_or(cfg.run_count);
            let datasets = prepare_all(&cfg.datasets)?;
            print_reports(&ablate_command(&cfg, &variants, &datasets, &out)?);
        }
        Command::Eval {
            common,
            checkpoint,
            datasets,
            quota,
            greedy,
            out,
        } => {
            let cfg = common.load()?;
            let params = load_params(checkpoint.as_deref(), &cfg.train)?;
            let paths = if datasets.is_empty() { cfg.train.datasets.clone() } else { datasets };
            let prepared = prepare_all(&paths)?;
            let rollout = RolloutConfig {
                quota: quota.unwrap_or(cfg.generate.quota),
                sampling: sampling(greedy),
                seed: cfg.generate.seed,
                env: cfg.train.env,
            };
            let stats = eval_command(&params, &prepared, &rollout)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_vec_pretty(&stats)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(())
}
