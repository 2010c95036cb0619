//! Renders what the interface shows after each click: the prediction
//! overlay, plus the attention of the first positive slot with and without
//! the order penalty.
//!
//! `cargo run --release --example viz -- [out_dir] [checkpoint]`

use std::path::PathBuf;

use orderseg::mask::BinaryMask;
use orderseg::model::{load_checkpoint, Model, ModelConfig, RoundInput};
use orderseg::prompts::{Click, ClickSet};
use orderseg::scenegen::{generate_dataset, DatasetSpec, Split, SplitRatios};
use orderseg::simharness::next_click;
use orderseg::viz;

fn main() -> orderseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "viz_out".into()));
    let model = match args.next() {
        Some(path) => load_checkpoint(path.as_ref())?.model,
        None => Model::new(ModelConfig::default(), 0)?,
    };
    std::fs::create_dir_all(&out)?;
    let scene = generate_dataset(&DatasetSpec { seed: 4, count: 1, size: 64, splits: SplitRatios::only(Split::Overlap) })?.remove(0);
    let gt = &scene.masks[scene.focus.unwrap_or(0)];
    let features = model.encode_image(&scene.image)?;

    let mut clicks = ClickSet::new();
    let mut pred = BinaryMask::empty(gt.width, gt.height);
    let mut panels = Vec::new();
    for round in 0..3 {
        let Ok(c) = next_click(&pred, gt) else { break };
        clicks.push(Click { round, ..c })?;
        let previous = (round > 0).then(|| pred.to_previous(round - 1));
        let input = RoundInput { depth: &scene.depth, clicks: &clicks, previous: previous.as_ref() };
        if round == 0 {
            let w = model.attention_weights(&features, &input)?;
            std::fs::write(out.join("attention.png"), viz::png_bytes(&viz::attention_panel(&scene.image, &w, 0, &clicks)?)?)?;
        }
        pred = model.predict(&features, &input)?;
        println!("round {}: IoU {:.3}", round + 1, pred.iou(gt)?);
        panels.push(viz::overlay(&scene.image, Some(&pred), &clicks));
    }
    std::fs::write(out.join("rounds.png"), viz::png_bytes(&viz::hstack(&panels))?)?;
    println!("wrote {}/rounds.png and attention.png", out.display());
    Ok(())
}
