//! Order maps of an overlap scene: one shared map for the positive clicks and
//! one per negative click, written side by side as a PNG.
//!
//! `cargo run --example order_maps -- [out.png]`

use orderseg::order::{negative_order_map, positive_order_map, OrderNormalization};
use orderseg::prompts::{Click, ClickSet};
use orderseg::scenegen::{generate_dataset, DatasetSpec, Split, SplitRatios};
use orderseg::simharness::interior_point;
use orderseg::viz;

fn main() -> orderseg::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "order_maps.png".into());
    let spec = DatasetSpec { seed: 7, count: 1, size: 64, splits: SplitRatios::only(Split::Overlap) };
    let scene = generate_dataset(&spec)?.remove(0);
    let (a, b) = scene.pair.expect("overlap scenes have a designated pair");

    let center = |k: usize| {
        let m = &scene.masks[k];
        let pixels: Vec<(usize, usize)> = (0..m.height).flat_map(|y| (0..m.width).map(move |x| (x, y))).filter(|&(x, y)| m.get(x, y)).collect();
        interior_point(m.width, m.height, &pixels).0
    };
    let ((px, py), (nx, ny)) = (center(a), center(b));
    let mut clicks = ClickSet::new();
    clicks.push(Click::positive(px, py, 0))?;
    clicks.push(Click::negative(nx, ny, 1))?;

    let pos = positive_order_map(&scene.depth, &clicks)?;
    let neg = negative_order_map(&scene.depth, &clicks.negatives()[0])?;
    for (name, map, k) in [("positive", &pos, a), ("negative", &neg, b)] {
        let mean_on = |inst: usize| {
            let m = &scene.masks[inst];
            let vals: Vec<f32> = map.values.data().iter().zip(&m.data).filter(|(_, &on)| on).map(|(v, _)| *v).collect();
            vals.iter().sum::<f32>() / vals.len() as f32
        };
        println!("{name} map: mean {:.3} on the clicked shape, {:.3} on the other", mean_on(k), mean_on(if k == a { b } else { a }));
    }

    let panels = viz::order_map_panels(&scene.depth, &clicks, OrderNormalization::PerMap)?;
    let mut row = vec![viz::overlay(&scene.image, None, &clicks)];
    row.extend(panels);
    std::fs::write(&out, viz::png_bytes(&viz::hstack(&row))?)?;
    println!("wrote {out}");
    Ok(())
}
