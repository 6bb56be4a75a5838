use super::*;
use crate::data::load_dataset;
use crate::env::{ActionKind, EnvConfig, Environment};
use crate::insight::InsightConfig;
use approx::assert_abs_diff_eq;

fn toy(name: &str, shift: usize) -> Arc<PreparedDataset> {
    let mut csv = String::from("cat,q1,q2,when\n");
    for i in 0..40 {
        csv.push_str(&format!(
            "{},{},{},2021-03-{:02}\n",
            ["a", "b", "c", "d", "e"][(i + shift) % 5],
            i * 3 + shift,
            (i * 17 + shift) % 11,
            1 + i % 28
        ));
    }
    PreparedDataset::new(load_dataset(csv.as_bytes(), name).unwrap(), InsightConfig::default())
}

fn small_config(variant: Variant, steps: u64, workers: usize) -> TrainConfig {
    TrainConfig {
        total_steps: steps,
        worker_count: workers,
        seed: 42,
        variant,
        network: NetworkSizes { hidden: 8, embed: 4 },
        log_interval: 50,
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        dqn: DqnConfig {
            warmup: 20,
            batch_size: 4,
            target_sync: 10,
            ..DqnConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn variant_tags_parse() {
    assert_eq!("full".parse::<Variant>(), Ok(Variant::Full));
    assert_eq!("ind".parse::<Variant>(), Ok(Variant::IndependentHeads));
    assert_eq!("Independent-Heads".parse::<Variant>(), Ok(Variant::IndependentHeads));
    assert_eq!("pen".parse::<Variant>(), Ok(Variant::Penalty));
    assert_eq!("dqn".parse::<Variant>(), Ok(Variant::Dqn));
    assert!(make_variant("ppo").is_err());
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>(), Ok(v));
    }
}

#[test]
fn variant_wiring() {
    let w = make_variant("full").unwrap();
    assert!(!w.independent_heads);
    assert_eq!(w.mask_mode, MaskMode::Grammar);
    assert_eq!(w.learner, Learner::ActorCritic);
    assert!(make_variant("ind").unwrap().independent_heads);
    assert_eq!(make_variant("ind").unwrap().mask_mode, MaskMode::Grammar);
    assert_eq!(make_variant("pen").unwrap().mask_mode, MaskMode::Structural);
    assert_eq!(make_variant("dqn").unwrap().learner, Learner::QLearning);
}

#[test]
fn variant_parameter_counts_differ_by_fusion_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let full = NetworkParams::init(small_config(Variant::Full, 1, 1).shape(), &mut rng);
    let ind = NetworkParams::init(small_config(Variant::IndependentHeads, 1, 1).shape(), &mut rng);
    let e = full.shape.embed;
    assert_eq!(full.parameter_count() - ind.parameter_count(), 8 * e * e);
}

#[test]
fn config_errors() {
    let data = vec![toy("a", 0)];
    let mut c = small_config(Variant::Full, 0, 1);
    assert!(matches!(train(&c, &data), Err(TrainError::NoSteps)));
    c.total_steps = 10;
    assert!(matches!(train(&c, &[]), Err(TrainError::NoDatasets)));
    c.worker_count = 0;
    assert!(matches!(train(&c, &data), Err(TrainError::NoWorkers)));
}

#[test]
fn single_worker_run_is_reproducible() {
    let data = vec![toy("a", 0), toy("b", 1)];
    let config = small_config(Variant::Full, 200, 1);
    let (p1, c1) = train(&config, &data).unwrap();
    let (p2, c2) = train(&config, &data).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    c1.write_csv(&mut a).unwrap();
    c2.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&c1).unwrap(), serde_json::to_string(&c2).unwrap());
    assert_eq!(p1, p2);
    assert!(!c1.points.is_empty());
    assert!(c1.aborted.is_none());
    assert!(c1.points.windows(2).all(|w| w[0].step < w[1].step));
    assert!(c1.episodes.iter().all(|(s, _)| *s <= 200));
}

#[test]
fn multi_worker_run_finishes_within_budget() {
    let data = vec![toy("a", 0), toy("b", 1), toy("c", 2)];
    let (params, curve) = train(&small_config(Variant::Full, 300, 3), &data).unwrap();
    assert!(params.is_finite());
    assert!(curve.episodes.iter().all(|(s, _)| *s <= 300));
    assert!(!curve.episodes.is_empty());
}

#[test]
fn update_budget_counts_updates() {
    let data = vec![toy("a", 0)];
    let config = TrainConfig {
        step_unit: StepUnit::Update,
        ..small_config(Variant::Full, 12, 1)
    };
    let (_, curve) = train(&config, &data).unwrap();
    assert_eq!(curve.episodes.len(), 12);
    assert_eq!(curve.episodes.last().unwrap().0, 12);
}

#[test]
fn penalty_and_independent_variants_train() {
    let data = vec![toy("a", 0)];
    for v in [Variant::Penalty, Variant::IndependentHeads] {
        let (params, curve) = train(&small_config(v, 150, 1), &data).unwrap();
        assert!(params.is_finite());
        assert_eq!(curve.variant, v);
        assert_eq!(params.shape.independent_heads, v == Variant::IndependentHeads);
    }
}

#[test]
fn penalty_episodes_can_go_negative() {
    // Under structural masks an untrained policy makes invalid choices, each
    // costing -1, so some episode returns drop below zero.
    let data = vec![toy("a", 0)];
    let config = TrainConfig {
        adam: AdamConfig {
            lr: 1e-9,
            ..AdamConfig::default()
        },
        ..small_config(Variant::Penalty, 400, 1)
    };
    let (_, curve) = train(&config, &data).unwrap();
    assert!(curve.episodes.iter().any(|(_, r)| *r < 0.0));
}

#[test]
fn dqn_trains_and_is_finite() {
    let data = vec![toy("a", 0)];
    let (params, curve) = train(&small_config(Variant::Dqn, 200, 1), &data).unwrap();
    assert!(params.is_finite());
    assert!(curve.aborted.is_none());
    assert!(!curve.episodes.is_empty());
}

#[test]
fn replay_memory_is_a_ring_with_minibatches() {
    let data = toy("a", 0);
    let mut env = Environment::new(data.clone(), EnvConfig::default());
    env.reset(None, Some("cat")).unwrap();
    let x = data.encoder.encode(env.state(), env.dataset()).unwrap().matrix;
    let mut memory = ReplayMemory::new(5);
    assert!(memory.is_empty());
    for i in 0..8 {
        memory.push(Transition {
            features: x.clone(),
            masks: Vec::new(),
            selections: [None; crate::env::NUM_HEADS],
            reward: i as f64,
            next: None,
        });
    }
    assert_eq!(memory.len(), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = memory.sample(3, &mut rng);
    assert_eq!(batch.len(), 3);
    let mut rewards: Vec<f64> = memory.sample(10, &mut rng).iter().map(|t| t.reward).collect();
    rewards.sort_by(f64::total_cmp);
    assert_eq!(rewards, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
}

#[test]
fn curve_windows_and_aggregation() {
    let eps = vec![(30, 1.0), (10, 3.0), (120, 5.0), (250, 2.0), (250, 4.0)];
    let c = ReturnCurve::from_episodes(Variant::Full, 0, 250, 100, eps, None);
    let steps: Vec<u64> = c.points.iter().map(|p| p.step).collect();
    assert_eq!(steps, vec![100, 200, 250]);
    assert_eq!(c.points[0].mean_return, 2.0);
    assert_eq!(c.points[0].episodes, 2);
    assert_eq!(c.points[2].mean_return, 3.0);
    assert_eq!(c.window_mean(0.0, 0.1), Some(3.0));
    assert_eq!(c.window_mean(0.5, 0.6), None);
    assert_eq!(c.window_mean(0.0, 0.2), Some(2.0));
    assert_eq!(c.window_mean(0.9, 1.0), Some(3.0));

    let d = ReturnCurve::from_episodes(Variant::Full, 1, 250, 100, vec![(90, 4.0), (260, 1.0)], None);
    let s = aggregate_curves(&[c.clone(), d.clone()]);
    assert_eq!(s.variant, Some(Variant::Full));
    assert_eq!(s.points[0].step, 100);
    assert_abs_diff_eq!(s.points[0].mean, 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s.points[0].std, 1.0, epsilon = 1e-12);
    assert_eq!(s.points[0].runs, 2);
    assert_eq!(s.points[1].runs, 1);
    // Re-aggregating the same curves reproduces the summary exactly.
    assert_eq!(aggregate_curves(&[c, d]), s);
    let mut csv = Vec::new();
    s.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("step,mean,std\n100,3,1\n"));
    assert_eq!(s.to_plot_json()["step"][0], 100);
}

#[test]
fn untrained_evaluation_produces_valid_dashboards() {
    let data = vec![toy("a", 0), toy("b", 3)];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = NetworkParams::init(NetworkShape::new(8, 4, 10, false), &mut rng);
    for sampling in [Sampling::Stochastic, Sampling::Greedy] {
        let config = RolloutConfig {
            quota: 120,
            sampling,
            ..RolloutConfig::default()
        };
        let stats = evaluate(&params, &data, &config).unwrap();
        assert_eq!(stats.per_dataset.len(), 2);
        assert_eq!(stats.invalid_charts, 0);
        assert!(stats.per_dataset.iter().all(|d| d.dashboards > 0));
        assert!(stats.charts.mean.is_finite());
    }
}

#[test]
fn rollout_respects_the_quota_and_start_state() {
    let data = toy("a", 0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = NetworkParams::init(NetworkShape::new(8, 4, 10, false), &mut rng);
    let config = RolloutConfig {
        quota: 60,
        ..RolloutConfig::default()
    };
    let out = rollout(&params, &data, None, &config).unwrap();
    assert_eq!(out.iter().map(|d| d.steps).sum::<usize>(), 60);
    assert!(out.iter().filter(|d| d.truncated).count() <= 1);
    for d in &out {
        assert_abs_diff_eq!(d.episode_return, d.breakdown.cr, epsilon = 1e-9);
    }
    // Same seed, same dashboards.
    assert_eq!(rollout(&params, &data, None, &config).unwrap(), out);

    let mut env = Environment::new(data.clone(), EnvConfig::default());
    env.reset(None, Some("q1")).unwrap();
    let key = data.context_index("q1").unwrap();
    env.step(&crate::env::ActionDecision::add(data.space.tuples(key)[0])).unwrap();
    let start = env.state().clone();
    let out = rollout(&params, &data, Some(&start), &RolloutConfig { quota: 30, ..config }).unwrap();
    for d in &out {
        assert_eq!(d.key_column == "q1", d.state.key_column == "q1");
        assert!(d.steps > 0);
    }
    // A tiny quota still yields one complete episode.
    let one = rollout(&params, &data, None, &RolloutConfig { quota: 0, ..config }).unwrap();
    assert_eq!(one.len(), 1);
    assert!(!one[0].truncated);
    let _ = ActionKind::Terminate;
}

#[test]
fn parameter_snapshots_never_tear() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let init = NetworkParams::init(NetworkShape::new(4, 2, 10, false), &mut rng);
    let store = ParamStore::new(init.clone(), AdamConfig::default());
    let consistent = |p: &NetworkParams| {
        // A constant gradient moves every weight by the same amount per update.
        let deltas: Vec<f64> = p
            .tensors()
            .iter()
            .zip(init.tensors())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
            .collect();
        deltas.iter().all(|d| (d - deltas[0]).abs() < 1e-12)
    };
    std::thread::scope(|s| {
        s.spawn(|| {
            for _ in 0..100 {
                let mut g = init.zeros_like();
                g.tensors_mut().into_iter().for_each(|t| t.fill(1.0));
                store.apply(&mut g);
            }
        });
        s.spawn(|| {
            for _ in 0..300 {
                assert!(consistent(&store.snapshot()));
            }
        });
    });
    assert_eq!(store.updates(), 100);
    assert!(consistent(&store.snapshot()));
}
