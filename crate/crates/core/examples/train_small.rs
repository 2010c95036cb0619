//! Trains the full model for a few steps on freshly generated scenes and
//! reports the loss curve and throughput.
//!
//! `cargo run --release --example train_small -- [scenes] [steps]`

use std::time::Instant;

use orderseg::model::{train, Model, ModelConfig, TrainConfig, TrainState};
use orderseg::scenegen::{generate_dataset, DatasetSpec, SplitRatios};

fn main() -> orderseg::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("numeric argument"));
    let count = args.next().unwrap_or(64) as usize;
    let steps = args.next().unwrap_or(8);

    let spec = DatasetSpec { seed: 0, count, size: 64, splits: SplitRatios::default() };
    let scenes = generate_dataset(&spec)?;
    let mut model = Model::<f32>::new(ModelConfig::default(), 0)?;
    let cfg = TrainConfig { epochs: 1, max_steps: Some(steps), ..Default::default() };
    let state = TrainState::new(&model, cfg.adam);

    let start = Instant::now();
    let (report, _) = train(&mut model, &scenes, &cfg, state, |info, _, _| {
        println!("step {:>4}  loss {:.5}", info.step, info.loss);
        Ok(())
    })?;
    let secs = start.elapsed().as_secs_f64();
    let samples = report.steps as f64 * cfg.batch_size as f64;
    println!("{} steps in {secs:.2}s ({:.1} ms/sample)", report.steps, 1e3 * secs / samples);
    Ok(())
}
