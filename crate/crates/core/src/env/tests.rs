use super::*;
use crate::chart::{validate_chart_for_key, Encoding};
use crate::data::load_dataset;
use crate::reward::score_dashboard;
use approx::assert_abs_diff_eq;

fn cars() -> Arc<PreparedDataset> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/cars.csv");
    let ds = crate::data::load_dataset_from_path(path).unwrap();
    PreparedDataset::new(ds, InsightConfig::default())
}

fn small() -> Arc<PreparedDataset> {
    let mut csv = String::from("cat,q1,q2,when\n");
    for i in 0..24 {
        csv.push_str(&format!(
            "{},{},{},2020-02-{:02}\n",
            ["a", "b", "c"][i % 3],
            i,
            (i * 37) % 11,
            1 + i
        ));
    }
    PreparedDataset::new(load_dataset(csv.as_bytes(), "small").unwrap(), InsightConfig::default())
}

fn col(data: &PreparedDataset, name: &str) -> usize {
    data.dataset.column_index(name).unwrap()
}

#[test]
fn reset_with_seed_key() {
    let mut env = Environment::new(cars(), EnvConfig::default());
    let s = env.reset(None, Some("Horsepower")).unwrap();
    assert_eq!(s.key_column, "Horsepower");
    assert!(s.charts.is_empty());
    assert_eq!(s.step, 0);
}

#[test]
fn reset_copies_start_and_rejects_missing_columns() {
    let data = small();
    let mut env = Environment::new(data.clone(), EnvConfig::default());
    let mut start = DashboardState::empty("cat");
    start.charts.push(ChartSpec::new(Mark::Bar, Encoding::raw("cat"), Encoding::new("q1", Aggregate::Sum)));
    start.charts.push(ChartSpec::new(Mark::Boxplot, Encoding::raw("cat"), Encoding::raw("q2")));
    start.charts.push(ChartSpec::new(Mark::Bar, Encoding::raw("cat"), Encoding::new("q2", Aggregate::Count)));
    start.step = 7;
    let s = env.reset(Some(start.clone()), None).unwrap().clone();
    assert_eq!(s.charts, start.charts);
    assert_eq!(s.step, 0);

    let mut bad = start.clone();
    bad.charts[0].y.column = "dropped".into();
    assert!(matches!(
        env.reset(Some(bad), None),
        Err(EnvError::Chart(ChartError::UnknownColumn(_)))
    ));
}

#[test]
fn rotation_cycles_keys() {
    let mut env = Environment::new(small(), EnvConfig::default());
    let keys: Vec<String> = (0..5)
        .map(|_| env.reset(None, None).unwrap().key_column.clone())
        .collect();
    assert_eq!(keys, ["cat", "q1", "q2", "when", "cat"]);
}

#[test]
fn empty_dashboard_masks_remove() {
    let mut env = Environment::new(small(), EnvConfig::default());
    env.reset(None, Some("q1")).unwrap();
    let m = env.masks();
    assert!(!m.action[ActionKind::Remove.index()]);
    assert!(m.action[ActionKind::Add.index()]);
    assert!(m.action[ActionKind::Terminate.index()]);
    assert!(m.remove_index.iter().all(|x| !x));
}

#[test]
fn nominal_y_field_disables_quantitative_aggregates() {
    let data = cars();
    let mut env = Environment::new(data.clone(), EnvConfig::default());
    env.reset(None, Some("Horsepower")).unwrap();
    let m = env.masks();
    let mut prefix: Selections = [None; NUM_HEADS];
    prefix[Head::Action.index()] = Some(ActionKind::Add.index());
    prefix[Head::Mark.index()] = Some(Mark::Bar.index());
    let fields = m.mask(Head::YField, &prefix);
    assert!(!fields[col(&data, "Horsepower")], "key column is never an explanation");
    assert!(fields[col(&data, "Origin")]);
    prefix[Head::YField.index()] = Some(col(&data, "Origin"));
    let aggs = m.mask(Head::YAggregate, &prefix);
    for a in [Aggregate::Mean, Aggregate::Max, Aggregate::Sum, Aggregate::Min, Aggregate::Bin] {
        assert!(!aggs[a.index()], "{a} must be masked");
    }
    assert!(aggs[Aggregate::None.index()]);
}

#[test]
fn explanation_head_masks_key_for_every_mark() {
    let data = cars();
    let mut env = Environment::new(data.clone(), EnvConfig::default());
    for key in ["Horsepower", "Origin", "Year"] {
        env.reset(None, Some(key)).unwrap();
        let m = env.masks();
        for mark in Mark::ALL {
            let mut prefix: Selections = [None; NUM_HEADS];
            prefix[Head::Mark.index()] = Some(mark.index());
            assert!(!m.mask(Head::YField, &prefix)[col(&data, key)]);
        }
    }
}

fn add_first_valid(env: &Environment) -> ActionDecision {
    let data = env.data().clone();
    let key = data.context_index(&env.state().key_column).unwrap();
    ActionDecision::add(data.space.tuples(key)[0])
}

#[test]
fn terminate_gives_zero_and_ends() {
    let mut env = Environment::new(small(), EnvConfig::default());
    env.reset(None, Some("cat")).unwrap();
    let d = add_first_valid(&env);
    env.step(&d).unwrap();
    let before = env.state().charts.clone();
    let r = env.step(&ActionDecision::terminate()).unwrap();
    assert!(r.done);
    assert_eq!(r.reward, 0.0);
    assert_eq!(r.state.charts, before);
    assert_eq!(env.step(&ActionDecision::terminate()), Err(EnvError::EpisodeOver));
}

#[test]
fn first_add_reward_equals_score() {
    let data = small();
    let mut env = Environment::new(data.clone(), EnvConfig::default());
    env.reset(None, Some("cat")).unwrap();
    let r = env.step(&add_first_valid(&env)).unwrap();
    let (oracle, _) = score_dashboard(&r.state, &data.dataset, &RewardConfig::default()).unwrap();
    assert_abs_diff_eq!(r.reward, oracle.cr, epsilon = 1e-12);
    assert!(r.reward > 0.0);
}

#[test]
fn remove_then_readd_nets_zero() {
    let data = small();
    let mut env = Environment::new(data.clone(), EnvConfig::default());
    env.reset(None, Some("q1")).unwrap();
    let tuples = data.space.tuples(col(&data, "q1"));
    env.step(&ActionDecision::add(tuples[0])).unwrap();
    env.step(&ActionDecision::add(tuples[tuples.len() / 2])).unwrap();
    let r1 = env.step(&ActionDecision::remove(1)).unwrap();
    let r2 = env.step(&ActionDecision::add(tuples[tuples.len() / 2])).unwrap();
    assert_abs_diff_eq!(r1.reward + r2.reward, 0.0, epsilon = 1e-12);
}

#[test]
fn masked_decision_is_a_contract_error() {
    let mut env = Environment::new(small(), EnvConfig::default());
    env.reset(None, Some("q1")).unwrap();
    assert!(matches!(
        env.step(&ActionDecision::remove(0)),
        Err(EnvError::MaskedDecision { head: Head::Action, .. })
    ));
    let mut d = ActionDecision::terminate();
    d.mark = Some(Mark::Bar);
    assert_eq!(env.step(&d), Err(EnvError::InactiveSelection(Head::Mark)));
}

#[test]
fn penalty_mode_discards_invalid_charts() {
    let data = small();
    let config = EnvConfig {
        mask_mode: MaskMode::Structural,
        ..EnvConfig::default()
    };
    let mut env = Environment::new(data.clone(), config);
    env.reset(None, Some("cat")).unwrap();
    // mean of the nominal key is invalid in both orientations.
    let bad = AddTuple {
        mark: Mark::Line,
        y_field: col(&data, "cat"),
        y_aggregate: Aggregate::Mean,
        key_aggregate: Aggregate::Mean,
        color: None,
        limit: LimitChoice::None,
    };
    let r = env.step(&ActionDecision::add(bad)).unwrap();
    assert!(r.penalized);
    assert_eq!(r.reward, -1.0);
    assert!(r.state.charts.is_empty());
    assert_eq!(r.state.step, 1);
}

#[test]
fn step_limit_forces_termination() {
    let config = EnvConfig {
        max_steps: 3,
        ..EnvConfig::default()
    };
    let mut env = Environment::new(small(), config);
    env.reset(None, Some("q1")).unwrap();
    let tuples = env.data().space.tuples(1);
    assert!(!env.step(&ActionDecision::add(tuples[0])).unwrap().done);
    assert!(!env.step(&ActionDecision::remove(0)).unwrap().done);
    assert!(env.step(&ActionDecision::add(tuples[1])).unwrap().done);
}

#[test]
fn every_tuple_builds_a_valid_chart() {
    let data = small();
    for key in 0..data.space.columns() {
        let name = &data.dataset.columns[key].name;
        let tuples = data.space.tuples(key);
        assert_eq!(tuples.len(), data.space.valid_count(key));
        for t in tuples {
            let chart = build_chart(&data.dataset, key, &t).unwrap();
            assert!(validate_chart_for_key(&chart, name, &data.dataset).unwrap().is_empty());
            assert_eq!(tuple_for_chart(&data.dataset, name, &chart), Some(t));
        }
    }
}

#[test]
fn line_over_time_is_transposed() {
    let data = small();
    let t = AddTuple {
        mark: Mark::Line,
        y_field: col(&data, "when"),
        y_aggregate: Aggregate::None,
        key_aggregate: Aggregate::None,
        color: None,
        limit: LimitChoice::None,
    };
    let chart = build_chart(&data.dataset, col(&data, "q1"), &t).unwrap();
    assert_eq!(chart.x.column, "when");
    assert_eq!(chart.y.column, "q1");
}

#[test]
fn selections_round_trip() {
    let data = small();
    for t in data.space.tuples(0).into_iter().take(50) {
        let d = ActionDecision::add(t);
        assert_eq!(ActionDecision::from_selections(&d.selections()).unwrap(), d);
    }
    let d = ActionDecision::change(3);
    assert_eq!(ActionDecision::from_selections(&d.selections()).unwrap(), d);
}

#[test]
fn trace_round_trip() {
    let mut env = Environment::new(small(), EnvConfig::default());
    env.reset(None, Some("cat")).unwrap();
    let d = add_first_valid(&env);
    let state = env.state().clone();
    let r = env.step(&d).unwrap();
    let rec = TraceRecord {
        state,
        decision: d,
        reward: r.reward,
        done: r.done,
    };
    let mut buf = Vec::new();
    write_trace(&mut buf, std::slice::from_ref(&rec)).unwrap();
    let back = read_trace(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0].decision, rec.decision);
    assert_abs_diff_eq!(back[0].reward, rec.reward, epsilon = 1e-15);
}

#[test]
fn shuffling_keeps_the_score() {
    use rand::SeedableRng;
    let mut env = Environment::new(small(), EnvConfig::default());
    env.reset(None, Some("cat")).unwrap();
    let key = env.data().context_index("cat").unwrap();
    for t in env.data().space.tuples(key).into_iter().step_by(7).take(4) {
        env.step(&ActionDecision::add(t)).unwrap();
    }
    let cr = env.breakdown().cr;
    let mut charts = env.state().charts.clone();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    env.shuffle_charts(&mut rng).unwrap();
    assert_abs_diff_eq!(env.breakdown().cr, cr, epsilon = 1e-12);
    let mut after = env.state().charts.clone();
    charts.sort_by_key(|c| format!("{c:?}"));
    after.sort_by_key(|c| format!("{c:?}"));
    assert_eq!(charts, after);
}
