//! How the order penalty reshapes a positive slot's attention: the share of
//! attention on the clicked shape's depth layer for growing σ.
//!
//! `cargo run --release --example attention -- [checkpoint]`

use orderseg::mask::BinaryMask;
use orderseg::model::{load_checkpoint, Model, ModelConfig, RoundInput};
use orderseg::numerics::softplus_inverse;
use orderseg::prompts::ClickSet;
use orderseg::scenegen::{generate_dataset, layer_depth, DatasetSpec, Scene, Split, SplitRatios};
use orderseg::simharness::next_click;

fn layer_share(model: &Model<f32>, scene: &Scene, k: usize) -> orderseg::Result<(f64, f64)> {
    let gt = &scene.masks[k];
    let mut clicks = ClickSet::new();
    clicks.push(next_click(&BinaryMask::empty(gt.width, gt.height), gt)?)?;
    let features = model.encode_image(&scene.image)?;
    let w = model.attention_weights(&features, &RoundInput { depth: &scene.depth, clicks: &clicks, previous: None })?;
    let target = layer_depth(scene.instances[k].layer);
    let p = model.config.patch_size;
    let (_, gw) = w.grid;
    let share = |row: &[f32]| -> f64 {
        row.iter()
            .enumerate()
            .map(|(j, &a)| {
                let (gx, gy) = (j % gw, j / gw);
                let on = (0..p * p).filter(|i| scene.depth.at(gx * p + i % p, gy * p + i / p) == target).count();
                a as f64 * on as f64 / (p * p) as f64
            })
            .sum()
    };
    Ok((share(w.before.row(0)), share(w.after.row(0))))
}

fn main() -> orderseg::Result<()> {
    let mut model = match std::env::args().nth(1) {
        Some(path) => load_checkpoint(path.as_ref())?.model,
        None => Model::new(ModelConfig::default(), 0)?,
    };
    let spec = DatasetSpec { seed: 2, count: 20, size: 64, splits: SplitRatios::only(Split::Overlap) };
    let scenes = generate_dataset(&spec)?;
    let trained: Vec<f64> = model.sigmas();
    println!("model σ per block: {trained:.2?}");

    let sigma_raw = model.params.fusion[0].order.sigma_raw;
    for sigma in [None, Some(1.0), Some(4.0), Some(16.0), Some(1e4)] {
        if let Some(s) = sigma {
            model.store.get_mut(sigma_raw).data_mut()[0] = softplus_inverse(s) as f32;
        }
        let (mut before, mut after) = (0.0, 0.0);
        for scene in &scenes {
            let (b, a) = layer_share(&model, scene, scene.focus.unwrap_or(0))?;
            before += b;
            after += a;
        }
        let n = scenes.len() as f64;
        let label = sigma.map_or(format!("{:.2} (as loaded)", trained[0]), |s| format!("{s:.2}"));
        println!("σ = {label:<16} clicked-layer share: {:.1}% before, {:.1}% after", 100.0 * before / n, 100.0 * after / n);
    }
    Ok(())
}
