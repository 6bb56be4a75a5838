//! Masked softmax heads, sampling, and the actor-critic loss.

use super::{ForwardCache, NetworkParams};
use crate::env::{ActionDecision, ActionMasks, Head, Selections, NUM_HEADS};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Network outputs for one state. Probabilities depend on masks, which for the
/// add heads depend on earlier selections, so they are derived on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutput {
    pub value: f64,
    /// Pre-mask scores per head in [`Head::ALL`] order.
    pub head_logits: Vec<Vec<f64>>,
}

impl PolicyOutput {
    pub fn head_probs(&self, head: Head, mask: &[bool]) -> Vec<f64> {
        masked_softmax(&self.head_logits[head.index()], mask)
    }
}

/// Softmax over unmasked options; masked options get exactly 0.
///
/// # Panics
/// If every option is masked.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    assert_eq!(logits.len(), mask.len());
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max > f64::NEG_INFINITY, "every option of an active head is masked");
    let mut p: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// Log-probabilities over unmasked options; masked options get `-inf`.
pub fn log_softmax_masked(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max > f64::NEG_INFINITY, "every option of an active head is masked");
    let lse = max
        + logits
            .iter()
            .zip(mask)
            .filter(|(_, m)| **m)
            .map(|(l, _)| (l - max).exp())
            .sum::<f64>()
            .ln();
    logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { l - lse } else { f64::NEG_INFINITY })
        .collect()
}

/// `-sum p log p` over options with nonzero probability.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// A decision together with the masks that were in force for each active head.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub decision: ActionDecision,
    pub masks: Vec<(Head, Vec<bool>)>,
    /// Summed entropy of the active heads.
    pub entropy: f64,
}

fn decide(out: &PolicyOutput, masks: &ActionMasks, mut pick: impl FnMut(&[f64]) -> usize) -> SampledAction {
    let mut sel: Selections = [None; NUM_HEADS];
    let mut log_probs = [0.0; NUM_HEADS];
    let mut used = Vec::new();
    let mut total_entropy = 0.0;
    let mut choose = |head: Head, sel: &mut Selections, used: &mut Vec<(Head, Vec<bool>)>| {
        let mask = masks.mask(head, sel);
        let logp = log_softmax_masked(&out.head_logits[head.index()], &mask);
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let choice = pick(&probs);
        debug_assert!(mask[choice]);
        sel[head.index()] = Some(choice);
        log_probs[head.index()] = logp[choice];
        total_entropy += entropy(&probs);
        used.push((head, mask));
    };
    choose(Head::Action, &mut sel, &mut used);
    let action = crate::env::ActionKind::ALL[sel[0].expect("selected")];
    for head in &action.active_heads()[1..] {
        choose(*head, &mut sel, &mut used);
    }
    let mut decision = ActionDecision::from_selections(&sel).expect("selections come from masks");
    decision.per_head_log_prob = log_probs;
    decision.joint_log_prob = log_probs.iter().sum();
    SampledAction {
        decision,
        masks: used,
        entropy: total_entropy,
    }
}

/// Samples the action head, then each head the action uses, masking each head
/// conditioned on the selections before it.
pub fn sample_decision(out: &PolicyOutput, masks: &ActionMasks, rng: &mut impl Rng) -> SampledAction {
    decide(out, masks, |probs| sample_index(probs, rng))
}

/// Draws an index from a probability vector, never one with probability 0.
pub fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Picks the most probable option of every head (first on ties).
pub fn greedy_decision(out: &PolicyOutput, masks: &ActionMasks) -> SampledAction {
    decide(out, masks, |probs| {
        let mut best = 0;
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
        }
        best
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossCoefficients {
    pub value: f64,
    pub entropy: f64,
}

impl Default for LossCoefficients {
    fn default() -> Self {
        Self {
            value: 0.5,
            entropy: 0.01,
        }
    }
}

/// One recorded step of an episode.
#[derive(Debug, Clone)]
pub struct StepSample {
    pub cache: ForwardCache,
    pub masks: Vec<(Head, Vec<bool>)>,
    pub selections: Selections,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    /// Sum of squared value errors (before the coefficient).
    pub value: f64,
    /// Sum of `-A log p`.
    pub policy: f64,
    /// Sum of head entropies (before the coefficient).
    pub entropy: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("empty trajectory")]
    EmptyTrajectory,
}

/// Undiscounted-by-default returns-to-go.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}

struct StepTerms {
    value_err: f64,
    advantage: f64,
    logp: f64,
    entropy: f64,
}

fn step_terms(sample: &StepSample, ret: f64, advantage: Option<f64>) -> StepTerms {
    let out = &sample.cache.output;
    let mut logp = 0.0;
    let mut ent = 0.0;
    for (head, mask) in &sample.masks {
        let lp = log_softmax_masked(&out.head_logits[head.index()], mask);
        let choice = sample.selections[head.index()].expect("active head is selected");
        logp += lp[choice];
        ent += entropy(&lp.iter().map(|l| l.exp()).collect::<Vec<_>>());
    }
    StepTerms {
        value_err: ret - out.value,
        advantage: advantage.unwrap_or(ret - out.value),
        logp,
        entropy: ent,
    }
}

/// `sum_i c_v (R_i - v_i)^2 - A_i log p_i - c_H H_i` with `R` the return-to-go
/// and `A = R - v` held constant. `advantages` overrides `A` when given.
pub fn episode_loss(
    samples: &[StepSample],
    coeffs: &LossCoefficients,
    advantages: Option<&[f64]>,
) -> Result<LossParts, LossError> {
    if samples.is_empty() {
        return Err(LossError::EmptyTrajectory);
    }
    let rewards: Vec<f64> = samples.iter().map(|s| s.reward).collect();
    let returns = returns_to_go(&rewards, 1.0);
    let mut parts = LossParts::default();
    for (i, s) in samples.iter().enumerate() {
        let t = step_terms(s, returns[i], advantages.map(|a| a[i]));
        parts.value += t.value_err * t.value_err;
        parts.policy -= t.advantage * t.logp;
        parts.entropy += t.entropy;
    }
    parts.total = coeffs.value * parts.value + parts.policy - coeffs.entropy * parts.entropy;
    Ok(parts)
}

/// Loss and its gradient with respect to `params`, which must be the parameters
/// the samples were computed with.
pub fn episode_gradients(
    params: &NetworkParams,
    samples: &[StepSample],
    coeffs: &LossCoefficients,
    advantages: Option<&[f64]>,
) -> Result<(LossParts, NetworkParams), LossError> {
    let parts = episode_loss(samples, coeffs, advantages)?;
    let rewards: Vec<f64> = samples.iter().map(|s| s.reward).collect();
    let returns = returns_to_go(&rewards, 1.0);
    let mut grad = params.zeros_like();
    for (i, s) in samples.iter().enumerate() {
        let out = &s.cache.output;
        let adv = advantages.map_or(returns[i] - out.value, |a| a[i]);
        let dvalue = -2.0 * coeffs.value * (returns[i] - out.value);
        let mut dlogits: Vec<Vec<f64>> = vec![Vec::new(); NUM_HEADS];
        for (head, mask) in &s.masks {
            let p = masked_softmax(&out.head_logits[head.index()], mask);
            let h = entropy(&p);
            let choice = s.selections[head.index()].expect("active head is selected");
            let d = p
                .iter()
                .enumerate()
                .map(|(j, &pj)| {
                    if pj == 0.0 {
                        return 0.0;
                    }
                    let onehot = if j == choice { 1.0 } else { 0.0 };
                    -adv * (onehot - pj) + coeffs.entropy * pj * (pj.ln() + h)
                })
                .collect();
            dlogits[head.index()] = d;
        }
        params.backward(&s.cache, &dlogits, dvalue, &mut grad);
    }
    Ok((parts, grad))
}
