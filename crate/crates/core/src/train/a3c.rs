//! Asynchronous advantage actor-critic workers.

use super::{worker_rng, ReturnCurve, StepUnit, TrainConfig, TrainError};
use crate::agent::{episode_gradients, sample_decision, save_checkpoint, Adam, AdamConfig, NetworkParams, StepSample};
use crate::env::{Environment, PreparedDataset};
use parking_lot::{Mutex, RwLock};
use rand_chacha::ChaCha8Rng;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

/// Shared parameters. Readers take a complete snapshot (an `Arc` clone);
/// writers build the next parameters off to the side and swap them in whole,
/// so a reader never observes a partial update.
pub struct ParamStore {
    current: RwLock<Arc<NetworkParams>>,
    optimizer: Mutex<Adam>,
    updates: AtomicU64,
}

impl ParamStore {
    pub fn new(params: NetworkParams, adam: AdamConfig) -> Self {
        let optimizer = Mutex::new(Adam::new(&params, adam));
        Self {
            current: RwLock::new(Arc::new(params)),
            optimizer,
            updates: AtomicU64::new(0),
        }
    }

    pub fn snapshot(&self) -> Arc<NetworkParams> {
        self.current.read().clone()
    }

    /// Applies one gradient as a single atomic update. Returns the gradient
    /// norm before clipping.
    pub fn apply(&self, grad: &mut NetworkParams) -> f64 {
        let mut opt = self.optimizer.lock();
        let mut next = (**self.current.read()).clone();
        let norm = opt.step(&mut next, grad);
        *self.current.write() = Arc::new(next);
        self.updates.fetch_add(1, Ordering::SeqCst);
        norm
    }

    pub fn updates(&self) -> u64 {
        self.updates.load(Ordering::SeqCst)
    }
}

struct Shared<'a> {
    config: &'a TrainConfig,
    datasets: &'a [Arc<PreparedDataset>],
    store: ParamStore,
    steps: AtomicU64,
    episodes: AtomicUsize,
    stop: AtomicBool,
    log: Mutex<Vec<(u64, f64)>>,
    aborted: Mutex<Option<String>>,
    next_checkpoint: Mutex<u64>,
}

impl Shared<'_> {
    fn progress(&self) -> u64 {
        match self.config.step_unit {
            StepUnit::Environment => self.steps.load(Ordering::SeqCst),
            StepUnit::Update => self.store.updates(),
        }
    }

    fn abort(&self, why: String) {
        tracing::warn!("training aborted: {why}");
        self.aborted.lock().get_or_insert(why);
        self.stop.store(true, Ordering::SeqCst);
    }

    fn maybe_checkpoint(&self) -> Result<(), TrainError> {
        let Some(dir) = &self.config.checkpoint_dir else {
            return Ok(());
        };
        let mut next = self.next_checkpoint.lock();
        let progress = self.progress();
        if progress < *next {
            return Ok(());
        }
        *next = progress + self.config.checkpoint_every.max(1);
        std::fs::create_dir_all(dir).map_err(crate::agent::CheckpointError::from)?;
        let path = dir.join(format!(
            "{}-seed{}-step{}.ckpt",
            self.config.variant, self.config.seed, progress
        ));
        save_checkpoint(&self.store.snapshot(), path)?;
        Ok(())
    }
}

pub(super) fn train_actor_critic(
    config: &TrainConfig,
    datasets: &[Arc<PreparedDataset>],
    params: NetworkParams,
) -> Result<(NetworkParams, ReturnCurve), TrainError> {
    let shared = Shared {
        config,
        datasets,
        store: ParamStore::new(params, config.adam),
        steps: AtomicU64::new(0),
        episodes: AtomicUsize::new(0),
        stop: AtomicBool::new(false),
        log: Mutex::new(Vec::new()),
        aborted: Mutex::new(None),
        next_checkpoint: Mutex::new(config.checkpoint_every.max(1)),
    };
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.worker_count)
            .map(|w| {
                let shared = &shared;
                scope.spawn(move || worker(shared, worker_rng(config.seed, w)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect::<Result<Vec<()>, TrainError>>()
    })?;
    let params = (*shared.store.snapshot()).clone();
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(crate::agent::CheckpointError::from)?;
        save_checkpoint(&params, dir.join(format!("{}-seed{}-final.ckpt", config.variant, config.seed)))?;
    }
    let curve = ReturnCurve::from_episodes(
        config.variant,
        config.seed,
        config.total_steps,
        config.log_interval,
        shared.log.into_inner(),
        shared.aborted.into_inner(),
    );
    Ok((params, curve))
}

fn worker(shared: &Shared<'_>, mut rng: ChaCha8Rng) -> Result<(), TrainError> {
    let config = shared.config;
    let env_config = config.env_config();
    let mut envs: Vec<Environment> = shared
        .datasets
        .iter()
        .map(|d| Environment::new(d.clone(), env_config))
        .collect();
    let mut params = shared.store.snapshot();
    let mut since_sync = 0;
    while !shared.stop.load(Ordering::SeqCst) {
        if since_sync >= config.sync_interval.max(1) {
            params = shared.store.snapshot();
            since_sync = 0;
        }
        since_sync += 1;
        let d = shared.episodes.fetch_add(1, Ordering::SeqCst) % envs.len();
        let env = &mut envs[d];
        env.reset(None, None)?;
        let Some((samples, ret, end)) = run_episode(shared, env, &params, &mut rng)? else {
            break;
        };
        let (parts, mut grad) = episode_gradients(&params, &samples, &config.loss, None)
            .expect("episodes have at least one step");
        if !parts.total.is_finite() || !grad.is_finite() {
            shared.abort(format!("non-finite loss {} at step {end}", parts.total));
            break;
        }
        shared.store.apply(&mut grad);
        let at = match config.step_unit {
            StepUnit::Environment => end,
            StepUnit::Update => shared.store.updates(),
        };
        shared.log.lock().push((at, ret));
        if config.step_unit == StepUnit::Update && shared.store.updates() >= config.total_steps {
            shared.stop.store(true, Ordering::SeqCst);
        }
        shared.maybe_checkpoint()?;
    }
    Ok(())
}

/// Plays one episode. `None` if the step budget ran out before it finished.
fn run_episode(
    shared: &Shared<'_>,
    env: &mut Environment,
    params: &NetworkParams,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(Vec<StepSample>, f64, u64)>, TrainError> {
    let config = shared.config;
    let mut samples = Vec::new();
    let mut ret = 0.0;
    loop {
        let step = shared.steps.fetch_add(1, Ordering::SeqCst);
        if config.step_unit == StepUnit::Environment && step >= config.total_steps {
            shared.stop.store(true, Ordering::SeqCst);
            return Ok(None);
        }
        if shared.stop.load(Ordering::SeqCst) {
            return Ok(None);
        }
        if config.shuffle_charts {
            env.shuffle_charts(rng)?;
        }
        let x = env.data().encoder.encode(env.state(), env.dataset()).map_err(crate::env::EnvError::from)?;
        let cache = params.forward(&x.matrix);
        let masks = env.masks();
        let sampled = sample_decision(&cache.output, &masks, rng);
        let result = env.step(&sampled.decision)?;
        ret += result.reward;
        samples.push(StepSample {
            cache,
            masks: sampled.masks,
            selections: sampled.decision.selections(),
            reward: result.reward,
        });
        if result.done {
            return Ok(Some((samples, ret, step + 1)));
        }
    }
}
