use super::*;
use crate::data::load_dataset;
use crate::env::{ActionKind, EnvConfig, Environment, PreparedDataset};
use crate::insight::InsightConfig;
use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn data() -> Arc<PreparedDataset> {
    let mut csv = String::from("cat,q1,q2,when\n");
    for i in 0..30 {
        csv.push_str(&format!(
            "{},{},{},2021-03-{:02}\n",
            ["a", "b", "c", "d"][i % 4],
            i * 2,
            (i * 13) % 7,
            1 + i
        ));
    }
    PreparedDataset::new(load_dataset(csv.as_bytes(), "toy").unwrap(), InsightConfig::default())
}

fn tiny(independent: bool) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    NetworkParams::init(NetworkShape::new(8, 4, 10, independent), &mut rng)
}

fn features(env: &Environment) -> ndarray::Array2<f64> {
    env.data()
        .encoder
        .encode(env.state(), env.dataset())
        .unwrap()
        .matrix
}

#[test]
fn probabilities_are_normalized_and_masked() {
    let params = tiny(false);
    let mut env = Environment::new(data(), EnvConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    env.reset(None, Some("q1")).unwrap();
    for _ in 0..20 {
        let out = params.forward(&features(&env)).output;
        assert!(out.value.is_finite());
        let s = sample_decision(&out, &env.masks(), &mut rng);
        for (head, mask) in &s.masks {
            let p = out.head_probs(*head, mask);
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            for (pi, m) in p.iter().zip(mask) {
                if !m {
                    assert_eq!(*pi, 0.0);
                }
            }
        }
        if env.step(&s.decision).unwrap().done {
            env.reset(None, None).unwrap();
        }
    }
}

#[test]
fn single_option_head_is_certain() {
    let p = masked_softmax(&[3.0, -1.0, 0.5], &[false, true, false]);
    assert_eq!(p, vec![0.0, 1.0, 0.0]);
    assert_eq!(entropy(&p), 0.0);
}

#[test]
fn sampling_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = masked_softmax(&[0.7f64.ln(), 0.3f64.ln()], &[true, true]);
    let hits = (0..10_000).filter(|_| policy::sample_index(&p, &mut rng) == 0).count();
    let freq = hits as f64 / 10_000.0;
    assert!((freq - 0.7).abs() < 0.03, "{freq}");
    let certain = [0.0, 1.0, 0.0];
    assert!((0..1000).all(|_| policy::sample_index(&certain, &mut rng) == 1));
}

#[test]
fn seeded_sampling_is_reproducible() {
    let params = tiny(false);
    let run = || {
        let mut env = Environment::new(data(), EnvConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        env.reset(None, Some("cat")).unwrap();
        let mut out = Vec::new();
        for _ in 0..10 {
            let o = params.forward(&features(&env)).output;
            let s = sample_decision(&o, &env.masks(), &mut rng);
            out.push(s.decision.clone());
            if env.step(&s.decision).unwrap().done {
                break;
            }
        }
        out
    };
    assert_eq!(run(), run());
}

fn episode(params: &NetworkParams, steps: usize, seed: u64) -> (Vec<StepSample>, Vec<ndarray::Array2<f64>>) {
    let mut env = Environment::new(data(), EnvConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    env.reset(None, Some("q1")).unwrap();
    let mut samples = Vec::new();
    let mut xs = Vec::new();
    for i in 0..steps {
        let x = features(&env);
        let cache = params.forward(&x);
        let mut s = sample_decision(&cache.output, &env.masks(), &mut rng);
        if i + 1 < steps && s.decision.action == ActionKind::Terminate {
            // Keep the episode going for the requested length.
            let masks = env.masks();
            let key = env.data().context_index(&env.state().key_column).unwrap();
            s.decision = crate::env::ActionDecision::add(env.data().space.tuples(key)[0]);
            s.masks = masks.masks_for(&s.decision);
        }
        let r = env.step(&s.decision).unwrap();
        samples.push(StepSample {
            cache,
            masks: s.masks,
            selections: s.decision.selections(),
            reward: r.reward,
        });
        xs.push(x);
    }
    (samples, xs)
}

fn relink(params: &NetworkParams, samples: &[StepSample], xs: &[ndarray::Array2<f64>]) -> Vec<StepSample> {
    samples
        .iter()
        .zip(xs)
        .map(|(s, x)| StepSample {
            cache: params.forward(x),
            masks: s.masks.clone(),
            selections: s.selections,
            reward: s.reward,
        })
        .collect()
}

fn gradient_check(independent: bool) {
    let params = tiny(independent);
    let (samples, xs) = episode(&params, 2, 5);
    let coeffs = LossCoefficients::default();
    let returns = returns_to_go(&samples.iter().map(|s| s.reward).collect::<Vec<_>>(), 1.0);
    let adv: Vec<f64> = samples
        .iter()
        .zip(&returns)
        .map(|(s, r)| r - s.cache.output.value)
        .collect();
    let (_, grad) = episode_gradients(&params, &samples, &coeffs, Some(&adv)).unwrap();
    let eps = 1e-6;
    let names = params.tensor_specs();
    let analytic = grad.tensors();
    for (ti, (name, _)) in names.iter().enumerate() {
        let mut num = Vec::new();
        for j in 0..analytic[ti].len() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][j] += eps;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][j] -= eps;
            let lp = episode_loss(&relink(&plus, &samples, &xs), &coeffs, Some(&adv)).unwrap().total;
            let lm = episode_loss(&relink(&minus, &samples, &xs), &coeffs, Some(&adv)).unwrap().total;
            num.push((lp - lm) / (2.0 * eps));
        }
        let diff: f64 = num.iter().zip(analytic[ti]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = num.iter().map(|a| a * a).sum::<f64>().sqrt()
            + analytic[ti].iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = if scale < 1e-10 { diff } else { diff / scale };
        assert!(rel < 1e-4, "{name}: relative error {rel:e}");
    }
}

#[test]
fn gradient_matches_finite_differences_full() {
    gradient_check(false);
}

#[test]
fn gradient_matches_finite_differences_independent() {
    gradient_check(true);
}

#[test]
fn perfect_critic_and_certain_heads_have_zero_value_and_entropy() {
    let params = tiny(false);
    let (mut samples, _) = episode(&params, 1, 2);
    // Force certainty: keep only the chosen option of every active head.
    for s in &mut samples {
        for (head, mask) in &mut s.masks {
            let c = s.selections[head.index()].unwrap();
            mask.iter_mut().enumerate().for_each(|(i, m)| *m = i == c);
        }
        s.reward = s.cache.output.value;
    }
    let parts = episode_loss(&samples, &LossCoefficients::default(), None).unwrap();
    assert_abs_diff_eq!(parts.value, 0.0, epsilon = 1e-24);
    assert_eq!(parts.entropy, 0.0);
}

#[test]
fn entropy_bonus_scales_with_coefficient() {
    let params = tiny(false);
    let (samples, _) = episode(&params, 2, 9);
    let lo = episode_loss(&samples, &LossCoefficients { value: 0.5, entropy: 0.01 }, None).unwrap();
    let hi = episode_loss(&samples, &LossCoefficients { value: 0.5, entropy: 0.1 }, None).unwrap();
    assert!(lo.entropy > 0.0);
    assert!(hi.total < lo.total);
    assert_abs_diff_eq!(lo.total - hi.total, 0.09 * lo.entropy, epsilon = 1e-12);
}

#[test]
fn empty_trajectory_is_an_error() {
    assert_eq!(
        episode_loss(&[], &LossCoefficients::default(), None),
        Err(LossError::EmptyTrajectory)
    );
}

#[test]
fn independent_heads_drop_only_fusion_weights() {
    let full = tiny(false);
    let ind = tiny(true);
    let shape = full.shape;
    let fusion = (crate::env::NUM_HEADS - 1) * shape.embed * shape.embed;
    assert_eq!(full.parameter_count() - ind.parameter_count(), fusion);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let params = tiny(false);
    let mut buf = Vec::new();
    write_checkpoint(&params, &mut buf).unwrap();
    let back = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(back, params);
    let mut again = Vec::new();
    write_checkpoint(&back, &mut again).unwrap();
    assert_eq!(buf, again);
    assert!(matches!(read_checkpoint(&b"nope"[..]), Err(CheckpointError::BadMagic)));
}

#[test]
fn adam_descends_a_quadratic() {
    let mut params = tiny(false);
    let mut adam = Adam::new(&params, AdamConfig { lr: 1e-2, ..AdamConfig::default() });
    let start = params.norm();
    for _ in 0..200 {
        // Gradient of |theta|^2 / 2 is theta.
        let mut g = params.clone();
        adam.step(&mut params, &mut g);
    }
    assert!(params.norm() < start * 0.5);
}
