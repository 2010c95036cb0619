//! Simulated user clicks.
//!
//! The evaluation click goes to the interior of the largest error region.
//! False-negative and false-positive pixels form separate regions, so every
//! region has a single polarity. Components are 4-connected; the interior
//! point is the pixel farthest (Euclidean) from any pixel outside the
//! component, with everything beyond the image border counting as outside.
//! Ties go to the smallest `(y, x)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::prompts::{Click, Polarity};

/// Probability that a training click comes from [`next_click`] rather than a
/// uniformly drawn error pixel.
pub const TRAIN_GREEDY_PROBABILITY: f64 = 0.7;
/// Minimum squared distance to the background for a first training click.
const INTERIOR_MIN_SQ_DIST: i64 = 4;

/// 4-connected components of `mask`, each listed in row-major order. The
/// components themselves are ordered by their first pixel.
pub fn components(mask: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (mask.width, mask.height);
    let mut label = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || label[start] {
            continue;
        }
        let mut stack = vec![start];
        label[start] = true;
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.data[j] && !label[j] {
                    label[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        pixels.sort_unstable();
        out.push(pixels.into_iter().map(|i| (i % w, i / w)).collect());
    }
    out
}

/// Squared Euclidean distance transform of one row or column: for every
/// index, `min_j f[j] + (i − j)²` (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let sites: Vec<usize> = (0..f.len()).filter(|&i| f[i].is_finite()).collect();
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let intersect = |p: usize, q: usize| -> f64 {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    let mut v = vec![sites[0]];
    let mut z = vec![f64::NEG_INFINITY];
    for &q in &sites[1..] {
        let mut s = intersect(*v.last().unwrap(), q);
        while s <= *z.last().unwrap() {
            v.pop();
            z.pop();
            s = intersect(*v.last().unwrap(), q);
        }
        v.push(q);
        z.push(s);
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance from every pixel to the nearest pixel outside `region`,
/// where the area beyond the image border counts as outside. Exact.
pub fn squared_distance_to_outside(region: &BinaryMask) -> Vec<i64> {
    let (w, h) = (region.width + 2, region.height + 2);
    let mut grid = vec![0.0f64; w * h];
    for y in 0..region.height {
        for x in 0..region.width {
            if region.get(x, y) {
                grid[(y + 1) * w + x + 1] = f64::INFINITY;
            }
        }
    }
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        edt_1d(&col, &mut col_out);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; w];
    for y in 0..h {
        edt_1d(&grid[y * w..(y + 1) * w], &mut row_out);
        grid[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    let mut out = Vec::with_capacity(region.width * region.height);
    for y in 0..region.height {
        for x in 0..region.width {
            out.push(grid[(y + 1) * w + x + 1] as i64);
        }
    }
    out
}

/// Pixel of `component` farthest from its outside; ties to smallest `(y, x)`.
pub fn interior_point(width: usize, height: usize, component: &[(usize, usize)]) -> ((usize, usize), i64) {
    let mut region = BinaryMask::empty(width, height);
    for &(x, y) in component {
        region.set(x, y, true);
    }
    let dist = squared_distance_to_outside(&region);
    let mut best = (component[0], -1i64);
    for &(x, y) in component {
        let d = dist[y * width + x];
        if d > best.1 {
            best = ((x, y), d);
        }
    }
    best
}

/// Click at the center of the largest error region of `pred` against `gt`.
///
/// Returns [`Error::NoError`] when the masks agree. The click's round is 0;
/// callers set it.
pub fn next_click(pred: &BinaryMask, gt: &BinaryMask) -> Result<Click> {
    let err = pred.xor(gt)?;
    if err.is_empty() {
        return Err(Error::NoError);
    }
    let fn_mask = BinaryMask::from_fn(gt.width, gt.height, |x, y| gt.get(x, y) && !pred.get(x, y));
    let fp_mask = BinaryMask::from_fn(gt.width, gt.height, |x, y| pred.get(x, y) && !gt.get(x, y));
    let mut best: Option<(Vec<(usize, usize)>, Polarity)> = None;
    for (mask, polarity) in [(fn_mask, Polarity::Positive), (fp_mask, Polarity::Negative)] {
        for comp in components(&mask) {
            let better = match &best {
                None => true,
                Some((b, _)) => comp.len() > b.len() || (comp.len() == b.len() && yx(comp[0]) < yx(b[0])),
            };
            if better {
                best = Some((comp, polarity));
            }
        }
    }
    let (comp, polarity) = best.expect("non-empty error");
    let ((x, y), _) = interior_point(gt.width, gt.height, &comp);
    Ok(Click { x, y, polarity, round: 0 })
}

fn yx(p: (usize, usize)) -> (usize, usize) {
    (p.1, p.0)
}

/// Training-time click sampler.
///
/// Round 0 (no prediction): a uniformly random ground-truth pixel at distance
/// ≥ 2 from the background, or any ground-truth pixel if none qualifies.
/// Later rounds: [`next_click`] with probability 0.7, otherwise a uniformly
/// random error pixel labelled by the ground truth at that pixel.
pub fn sample_train_clicks(gt: &BinaryMask, pred: Option<&BinaryMask>, round: usize, rng: &mut impl Rng) -> Result<Click> {
    if gt.is_empty() {
        return Err(Error::Dataset("ground-truth mask is empty".into()));
    }
    let pred = match pred {
        None => {
            let dist = squared_distance_to_outside(gt);
            let interior: Vec<usize> = (0..dist.len()).filter(|&i| gt.data[i] && dist[i] >= INTERIOR_MIN_SQ_DIST).collect();
            let pool = if interior.is_empty() { (0..gt.data.len()).filter(|&i| gt.data[i]).collect() } else { interior };
            let i = pool[rng.random_range(0..pool.len())];
            return Ok(Click::positive(i % gt.width, i / gt.width, round));
        }
        Some(p) => p,
    };
    let err = pred.xor(gt)?;
    if err.is_empty() {
        return Err(Error::NoError);
    }
    if rng.random_bool(TRAIN_GREEDY_PROBABILITY) {
        let c = next_click(pred, gt)?;
        return Ok(Click { round, ..c });
    }
    let pool: Vec<usize> = (0..err.data.len()).filter(|&i| err.data[i]).collect();
    let i = pool[rng.random_range(0..pool.len())];
    let (x, y) = (i % gt.width, i / gt.width);
    let polarity = if gt.get(x, y) { Polarity::Positive } else { Polarity::Negative };
    Ok(Click { x, y, polarity, round })
}
