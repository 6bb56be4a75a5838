//! Deep Q-learning baseline.
//!
//! The network and encoder are shared with the actor-critic; each head's
//! logits are read as per-option Q components and the value of a composite
//! decision is the sum over its active heads. Greedy decisions pick the best
//! option head by head under the same conditional masks.

use super::{worker_rng, ReturnCurve, StepUnit, TrainConfig, TrainError};
use crate::agent::{greedy_decision, sample_decision, save_checkpoint, Adam, NetworkParams, PolicyOutput};
use crate::env::{ActionMasks, Environment, Head, PreparedDataset, Selections, NUM_HEADS};
use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct Transition {
    pub features: Array2<f64>,
    pub masks: Vec<(Head, Vec<bool>)>,
    pub selections: Selections,
    pub reward: f64,
    /// Features and masks of the next state; `None` when the episode ended.
    pub next: Option<(Array2<f64>, ActionMasks)>,
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Up to `batch` distinct transitions drawn uniformly.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Vec<&Transition> {
        let n = batch.min(self.items.len());
        sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect()
    }
}

fn q_of(out: &PolicyOutput, masks: &[(Head, Vec<bool>)], sel: &Selections) -> f64 {
    masks
        .iter()
        .map(|(h, _)| out.head_logits[h.index()][sel[h.index()].expect("active head is selected")])
        .sum()
}

/// One temporal-difference update on a minibatch. Returns the mean squared error.
fn td_update(
    params: &mut NetworkParams,
    target: &NetworkParams,
    adam: &mut Adam,
    batch: &[&Transition],
    gamma: f64,
) -> f64 {
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for t in batch {
        let y = t.reward
            + t.next.as_ref().map_or(0.0, |(x, masks)| {
                let out = target.forward(x).output;
                let best = greedy_decision(&out, masks);
                gamma * q_of(&out, &best.masks, &best.decision.selections())
            });
        let cache = params.forward(&t.features);
        let q = q_of(&cache.output, &t.masks, &t.selections);
        let err = q - y;
        loss += err * err * scale;
        let mut dlogits = vec![Vec::new(); NUM_HEADS];
        for (h, _) in &t.masks {
            let mut d = vec![0.0; cache.output.head_logits[h.index()].len()];
            d[t.selections[h.index()].expect("active head is selected")] = 2.0 * err * scale;
            dlogits[h.index()] = d;
        }
        params.backward(&cache, &dlogits, 0.0, &mut grad);
    }
    if loss.is_finite() && grad.is_finite() {
        adam.step(params, &mut grad);
    }
    loss
}

pub(super) fn train_dqn(
    config: &TrainConfig,
    datasets: &[Arc<PreparedDataset>],
    mut params: NetworkParams,
) -> Result<(NetworkParams, ReturnCurve), TrainError> {
    let dq = config.dqn;
    let mut rng = worker_rng(config.seed, 0);
    let mut adam = Adam::new(&params, config.adam);
    let mut target = params.clone();
    let mut memory = ReplayMemory::new(dq.replay_capacity);
    let mut envs: Vec<Environment> = datasets
        .iter()
        .map(|d| Environment::new(d.clone(), config.env_config()))
        .collect();
    let uniform = PolicyOutput {
        value: 0.0,
        head_logits: params.shape.arities.iter().map(|a| vec![0.0; *a]).collect(),
    };
    let decay_steps = (config.total_steps as f64 * dq.epsilon_decay).max(1.0);
    let (mut steps, mut updates) = (0u64, 0u64);
    let mut log = Vec::new();
    let mut aborted = None;
    let mut episode = 0usize;
    let progress = |steps: u64, updates: u64| match config.step_unit {
        StepUnit::Environment => steps,
        StepUnit::Update => updates,
    };
    'outer: while progress(steps, updates) < config.total_steps {
        let env = &mut envs[episode % datasets.len()];
        episode += 1;
        env.reset(None, None)?;
        let mut ret = 0.0;
        let mut x = env.data().encoder.encode(env.state(), env.dataset()).map_err(crate::env::EnvError::from)?.matrix;
        loop {
            if progress(steps, updates) >= config.total_steps {
                break 'outer;
            }
            let masks = env.masks();
            let eps = dq.epsilon_start + (dq.epsilon_end - dq.epsilon_start) * (steps as f64 / decay_steps).min(1.0);
            let chosen = if rng.random::<f64>() < eps {
                sample_decision(&uniform, &masks, &mut rng)
            } else {
                greedy_decision(&params.forward(&x).output, &masks)
            };
            let result = env.step(&chosen.decision)?;
            steps += 1;
            ret += result.reward;
            let next_x = env.data().encoder.encode(env.state(), env.dataset()).map_err(crate::env::EnvError::from)?.matrix;
            memory.push(Transition {
                features: x,
                masks: chosen.masks,
                selections: chosen.decision.selections(),
                reward: result.reward,
                next: (!result.done).then(|| (next_x.clone(), env.masks())),
            });
            x = next_x;
            if memory.len() >= dq.warmup.max(dq.batch_size) && steps % dq.train_every.max(1) as u64 == 0 {
                let batch = memory.sample(dq.batch_size, &mut rng);
                let loss = td_update(&mut params, &target, &mut adam, &batch, dq.gamma);
                updates += 1;
                if !loss.is_finite() {
                    aborted = Some(format!("non-finite loss at step {steps}"));
                    break 'outer;
                }
                if updates % dq.target_sync.max(1) as u64 == 0 {
                    target = params.clone();
                }
            }
            if result.done {
                log.push((progress(steps, updates), ret));
                break;
            }
        }
    }
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(crate::agent::CheckpointError::from)?;
        save_checkpoint(&params, dir.join(format!("{}-seed{}-final.ckpt", config.variant, config.seed)))?;
    }
    let curve = ReturnCurve::from_episodes(
        config.variant,
        config.seed,
        config.total_steps,
        config.log_interval,
        log,
        aborted,
    );
    Ok((params, curve))
}
