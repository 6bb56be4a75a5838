//! Fixtures shared by the benchmarks.

use dashgen_core::agent::NetworkParams;
use dashgen_core::data::load_dataset_from_path;
use dashgen_core::env::{build_chart, PreparedDataset};
use dashgen_core::insight::InsightConfig;
use dashgen_core::{DashboardState, NetworkShape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::sync::Arc;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(format!("{name}.csv"))
}

pub fn prepared(name: &str) -> Arc<PreparedDataset> {
    let dataset = load_dataset_from_path(data_path(name)).expect("bundled dataset");
    PreparedDataset::new(dataset, InsightConfig::default())
}

pub fn params(hidden: usize, embed: usize) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    NetworkParams::init(NetworkShape::new(hidden, embed, 10, false), &mut rng)
}

/// A dashboard of `n` valid charts keyed on the first column that has any.
pub fn dashboard(data: &PreparedDataset, n: usize) -> DashboardState {
    let key = (0..data.dataset.context_columns().len())
        .find(|&k| data.space.tuples(k).len() >= n)
        .expect("a key column with enough charts");
    let mut state = DashboardState::empty(data.dataset.columns[key].name.clone());
    let tuples = data.space.tuples(key);
    let stride = (tuples.len() / n.max(1)).max(1);
    for t in tuples.iter().step_by(stride).take(n) {
        state.charts.push(build_chart(&data.dataset, key, t).expect("valid tuple"));
    }
    state
}
