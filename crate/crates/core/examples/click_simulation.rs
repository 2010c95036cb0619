//! The simulated user: where the next click goes, and how the protocol
//! scores perfect and empty segmenters.
//!
//! `cargo run --example click_simulation`

use orderseg::mask::BinaryMask;
use orderseg::scenegen::{generate_dataset, DatasetSpec, SplitRatios};
use orderseg::simharness::{aggregate, eval_instances, next_click, run_protocol, EmptySegmenter, InstanceSelection, OracleSegmenter, ProtocolConfig};

fn show(m: &BinaryMask, click: (usize, usize)) {
    for y in 0..m.height {
        let row: String = (0..m.width)
            .map(|x| if (x, y) == click { 'X' } else if m.get(x, y) { '#' } else { '.' })
            .collect();
        println!("  {row}");
    }
}

fn main() -> orderseg::Result<()> {
    let gt = BinaryMask::from_fn(12, 9, |x, y| (2..9).contains(&x) && (1..8).contains(&y));
    let pred = BinaryMask::from_fn(12, 9, |x, y| (2..9).contains(&x) && (1..5).contains(&y) || (x >= 10 && y < 2));
    let c = next_click(&BinaryMask::empty(12, 9), &gt)?;
    println!("first click {:?} at ({}, {}):", c.polarity, c.x, c.y);
    show(&gt, (c.x, c.y));
    let c = next_click(&pred, &gt)?;
    println!("correction {:?} at ({}, {}) against this prediction:", c.polarity, c.x, c.y);
    show(&pred, (c.x, c.y));

    let scenes = generate_dataset(&DatasetSpec { seed: 0, count: 10, size: 64, splits: SplitRatios::default() })?;
    let instances = eval_instances(&scenes, None, InstanceSelection::All);
    let cfg = ProtocolConfig::default();
    let oracle: Vec<_> = instances.iter().map(|i| run_protocol(&OracleSegmenter(i.gt.clone()), i, &cfg)).collect();
    let empty: Vec<_> = instances.iter().map(|i| run_protocol(&EmptySegmenter, i, &cfg)).collect();
    for (name, traces) in [("oracle", &oracle), ("empty", &empty)] {
        let r = aggregate(traces)?;
        println!("{name:<7} {} instances: NoC90 {:.2}  NoC95 {:.2}  1-mIoU {:.3}  NoF95 {}", r.instances, r.noc90, r.noc95, r.miou_1, r.nof95);
    }
    Ok(())
}
