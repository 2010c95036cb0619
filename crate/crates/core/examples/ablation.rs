//! Directional ablation on synthetic scenes: trains each arm (or reuses its
//! checkpoint) and compares them on overlap scenes.
//!
//! `cargo run --release --example ablation -- <cache-dir> [train-scenes] [epochs] [seeds] [eval-scenes]`

use std::path::PathBuf;

use orderseg::simharness::ToyAblation;

fn main() -> orderseg::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cache = PathBuf::from(args.first().map_or("target/ablation-example", String::as_str));
    let num = |i: usize, d: u64| args.get(i).map_or(d, |s| s.parse().expect("numeric argument"));
    let setup = ToyAblation {
        train_scenes: num(1, 200) as usize,
        epochs: num(2, 2),
        seeds: num(3, 1),
        eval_scenes: num(4, 40) as usize,
        ..Default::default()
    };
    print!("{}", setup.run(&cache)?.table());
    Ok(())
}
