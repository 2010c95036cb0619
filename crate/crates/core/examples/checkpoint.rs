//! Saves a checkpoint mid-training, resumes from it, and confirms the result
//! is byte-identical to an uninterrupted run.
//!
//! `cargo run --release --example checkpoint`

use orderseg::model::{checkpoint_bytes, load_checkpoint, save_checkpoint, train, Checkpoint, CheckpointMeta, Model, ModelConfig, TrainConfig, TrainState};
use orderseg::scenegen::{generate_dataset, DatasetSpec, SplitRatios};

fn run(scenes: &[orderseg::scenegen::Scene], cfg: &TrainConfig, ck: Option<Checkpoint>) -> orderseg::Result<Checkpoint> {
    let (mut model, state) = match ck {
        Some(ck) => (ck.model, ck.train_state.expect("optimizer state")),
        None => {
            let m = Model::new(ModelConfig::default(), cfg.seed)?;
            let s = TrainState::new(&m, cfg.adam);
            (m, s)
        }
    };
    let (report, state) = train(&mut model, scenes, cfg, state, |_, _, _| Ok(()))?;
    let meta = CheckpointMeta { step: state.step, epoch: state.epoch, train_seed: Some(cfg.seed), dataset_seed: None, last_loss: report.step_losses.last().copied() };
    Ok(Checkpoint { model, seed: cfg.seed, meta, train_state: Some(state) })
}

fn main() -> orderseg::Result<()> {
    let scenes = generate_dataset(&DatasetSpec { seed: 0, count: 8, size: 64, splits: SplitRatios::default() })?;
    let cfg = |steps| TrainConfig { epochs: 1, batch_size: 2, max_steps: Some(steps), ..Default::default() };
    let dir = tempfile::TempDir::new()?;
    let path = dir.path().join("half.ckpt");

    let straight = run(&scenes, &cfg(4), None)?;
    save_checkpoint(&path, &run(&scenes, &cfg(2), None)?)?;
    let half = load_checkpoint(&path)?;
    println!("saved at step {} ({} bytes)", half.meta.step, std::fs::metadata(&path)?.len());
    let resumed = run(&scenes, &cfg(4), Some(half))?;

    let (a, b) = (checkpoint_bytes(&straight)?, checkpoint_bytes(&resumed)?);
    println!("uninterrupted vs resumed at step {}: {}", resumed.meta.step, if a == b { "identical" } else { "DIFFERENT" });
    let mut corrupt = a.clone();
    corrupt[40] ^= 1;
    println!("flipped bit: {}", orderseg::model::parse_checkpoint(&corrupt).err().map_or("accepted".into(), |e| e.to_string()));
    Ok(())
}
