//! Runs the click protocol for a model on each split and prints the metric
//! table.
//!
//! `cargo run --release --example evaluate -- [checkpoint] [scenes]`

use orderseg::cli::report_table;
use orderseg::model::{load_checkpoint, Model, ModelConfig};
use orderseg::scenegen::{generate_dataset, DatasetSpec, Split, SplitRatios};
use orderseg::simharness::{aggregate_with_budget, eval_instances, run_protocol, InstanceSelection, ProtocolConfig};

fn main() -> orderseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let model = match args.next().filter(|a| a != "-") {
        Some(path) => load_checkpoint(path.as_ref())?.model,
        None => Model::new(ModelConfig::default(), 0)?,
    };
    let count = args.next().map_or(12, |a| a.parse().expect("scene count"));
    let scenes = generate_dataset(&DatasetSpec { seed: 2, count, size: 64, splits: SplitRatios::default() })?;
    let cfg = ProtocolConfig { max_clicks: 10, ..Default::default() };

    for split in [Split::Plain, Split::Overlap, Split::SameDepth] {
        let instances = eval_instances(&scenes, Some(split), InstanceSelection::Focus);
        if instances.is_empty() {
            continue;
        }
        let traces: Vec<_> = instances.iter().map(|i| run_protocol(&model, i, &cfg)).collect();
        println!("[{}]", split.name());
        print!("{}", report_table(&aggregate_with_budget(&traces, cfg.max_clicks)?));
    }
    Ok(())
}
