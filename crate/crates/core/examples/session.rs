//! An interactive session: the image is encoded once, clicks follow the
//! simulated user, and the last click is undone.
//!
//! `cargo run --release --example session -- [checkpoint]`

use orderseg::mask::BinaryMask;
use orderseg::model::{load_checkpoint, Model, ModelConfig, Session};
use orderseg::scenegen::{generate_dataset, DatasetSpec, Split, SplitRatios};
use orderseg::simharness::next_click;

fn main() -> orderseg::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => load_checkpoint(path.as_ref())?.model,
        None => Model::new(ModelConfig::default(), 0)?,
    };
    let scene = generate_dataset(&DatasetSpec { seed: 5, count: 1, size: 64, splits: SplitRatios::only(Split::Overlap) })?.remove(0);
    let gt = scene.masks[scene.focus.unwrap_or(0)].clone();
    let mut session = Session::new(&model, &scene.image, Some(scene.depth.clone()), Some(gt.clone()))?;
    println!("encoded in {:.1} ms", session.encode_time().as_secs_f64() * 1e3);

    let mut pred = BinaryMask::empty(gt.width, gt.height);
    for _ in 0..5 {
        let Ok(c) = next_click(&pred, &gt) else { break };
        let r = session.click(&model, c.x, c.y, c.polarity)?;
        println!(
            "round {}: {:?} click at ({:>2}, {:>2})  IoU {:.3}  {:.1} ms",
            r.round,
            c.polarity,
            c.x,
            c.y,
            r.iou.unwrap_or(f64::NAN),
            r.elapsed.as_secs_f64() * 1e3
        );
        pred = r.mask;
    }
    session.undo()?;
    println!("after undo: {} rounds, IoU trace {:.3?}", session.round(), session.ious());
    println!("encoder calls: {}", session.encoder_calls());
    Ok(())
}
