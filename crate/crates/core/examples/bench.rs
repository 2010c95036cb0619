//! Encode-once versus re-encode-per-click cost on a handful of instances.
//!
//! `cargo run --release --example bench -- [instances]`

use orderseg::cli::run_bench;
use orderseg::model::{Model, ModelConfig};
use orderseg::scenegen::{generate_dataset, DatasetSpec, SplitRatios};
use orderseg::simharness::{eval_instances, InstanceSelection};

fn main() -> orderseg::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(4, |a| a.parse().expect("instance count"));
    let model = Model::new(ModelConfig::default(), 0)?;
    let scenes = generate_dataset(&DatasetSpec { seed: 6, count: n, size: 64, splits: SplitRatios::default() })?;
    let mut instances = eval_instances(&scenes, None, InstanceSelection::Focus);
    instances.truncate(n);
    let report = run_bench(&model, &instances)?;
    print!("{}", report.table());
    Ok(())
}
