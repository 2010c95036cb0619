//! Click prompts and their two encodings: one embedding per click slot
//! (sparse) and a rasterized click map projected to feature channels (dense).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemm, MatRef, Scalar, Tensor};
use crate::params::{Gradients, ParamId, ParamStore};

/// Total sparse slots.
pub const NUM_SLOTS: usize = 48;
/// Slots reserved for each polarity; positives use `0..24`, negatives `24..48`.
pub const SLOTS_PER_POLARITY: usize = 24;
pub const DEFAULT_DISK_RADIUS: usize = 5;
/// Positions in `[0, 1)` are stretched by this factor before the frequency ladder.
pub const POSITION_SCALE: f64 = 100.0;
const FREQUENCY_BASE: f64 = 10_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
}

impl ImageSize {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// A user click in image pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Click {
    pub x: usize,
    pub y: usize,
    pub polarity: Polarity,
    pub round: usize,
}

impl Click {
    pub fn positive(x: usize, y: usize, round: usize) -> Self {
        Self { x, y, polarity: Polarity::Positive, round }
    }

    pub fn negative(x: usize, y: usize, round: usize) -> Self {
        Self { x, y, polarity: Polarity::Negative, round }
    }

    pub fn check_bounds(&self, size: ImageSize) -> Result<()> {
        if self.x >= size.width || self.y >= size.height {
            return Err(Error::OutOfBounds { x: self.x, y: self.y, width: size.width, height: size.height });
        }
        Ok(())
    }
}

/// Positive and negative clicks of one session, in placement order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickSet {
    positives: Vec<Click>,
    negatives: Vec<Click>,
}

impl ClickSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a click, enforcing the per-polarity slot budget and
    /// non-decreasing round indices.
    pub fn push(&mut self, click: Click) -> Result<()> {
        if let Some(last) = self.last_round() {
            if click.round < last {
                return Err(Error::Validation(format!(
                    "click round {} precedes previous round {last}",
                    click.round
                )));
            }
        }
        let list = match click.polarity {
            Polarity::Positive => &mut self.positives,
            Polarity::Negative => &mut self.negatives,
        };
        if list.len() >= SLOTS_PER_POLARITY {
            return Err(Error::Capacity { polarity: click.polarity, limit: SLOTS_PER_POLARITY });
        }
        list.push(click);
        Ok(())
    }

    pub fn positives(&self) -> &[Click] {
        &self.positives
    }

    pub fn negatives(&self) -> &[Click] {
        &self.negatives
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn last_round(&self) -> Option<usize> {
        self.positives.iter().chain(&self.negatives).map(|c| c.round).max()
    }

    /// All clicks ordered by round (ties: positives first).
    pub fn chronological(&self) -> Vec<Click> {
        let mut all: Vec<Click> = self.positives.iter().chain(&self.negatives).copied().collect();
        all.sort_by_key(|c| c.round);
        all
    }

    pub fn check_bounds(&self, size: ImageSize) -> Result<()> {
        self.positives.iter().chain(&self.negatives).try_for_each(|c| c.check_bounds(size))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    Positive,
    Negative,
    NonPoint,
}

/// Per-slot occupancy for the 48 sparse slots.
pub fn slot_occupancy(clicks: &ClickSet) -> Vec<SlotKind> {
    let mut occ = vec![SlotKind::NonPoint; NUM_SLOTS];
    for i in 0..clicks.positives.len() {
        occ[i] = SlotKind::Positive;
    }
    for i in 0..clicks.negatives.len() {
        occ[SLOTS_PER_POLARITY + i] = SlotKind::Negative;
    }
    occ
}

/// One embedding per slot, `[48 × C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseEmbeddings<T> {
    pub values: Tensor<T>,
    pub occupancy: Vec<SlotKind>,
}

/// Click map projected to feature channels, `[h × w × C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseEmbedding<T> {
    pub values: Tensor<T>,
}

/// Sinusoidal encoding of a normalized position `(u, v)` in `[0, 1)²`.
///
/// The first half of the channels are sines and the second half cosines;
/// within each half, `C/4` channels encode `u` and `C/4` encode `v` over a
/// geometric frequency ladder.
pub fn positional_encoding<T: Scalar>(u: f64, v: f64, dim: usize) -> Vec<T> {
    assert!(dim.is_multiple_of(4) && dim > 0, "positional encoding needs a multiple of 4 channels");
    let k = dim / 4;
    let mut out = vec![T::zero(); dim];
    for i in 0..k {
        let freq = FREQUENCY_BASE.powf(-(i as f64) / k as f64);
        let au = u * POSITION_SCALE * freq;
        let av = v * POSITION_SCALE * freq;
        out[i] = T::from_f64_lossy(au.sin());
        out[k + i] = T::from_f64_lossy(av.sin());
        out[2 * k + i] = T::from_f64_lossy(au.cos());
        out[3 * k + i] = T::from_f64_lossy(av.cos());
    }
    out
}

/// Learned prompt tables.
#[derive(Clone, Copy, Debug)]
pub struct PromptParams {
    pub positive_type: ParamId,
    pub negative_type: ParamId,
    pub non_point: ParamId,
    /// `[2·p² × C]` weights of the strided click-map convolution.
    pub dense_weight: ParamId,
    pub dense_bias: ParamId,
}

impl PromptParams {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, dim: usize, patch: usize, rng: &mut impl rand::Rng) -> Self {
        Self {
            positive_type: store.register_normal("prompt.positive_type", vec![dim], 0.5, rng),
            negative_type: store.register_normal("prompt.negative_type", vec![dim], 0.5, rng),
            non_point: store.register_normal("prompt.non_point", vec![dim], 0.5, rng),
            dense_weight: store.register_linear("prompt.dense_weight", 2 * patch * patch, dim, rng),
            dense_bias: store.register_full("prompt.dense_bias", vec![dim], 0.0),
        }
    }
}

/// Builds the 48 slot embeddings: positional encoding plus a polarity
/// embedding for occupied slots, the non-point embedding elsewhere.
pub fn encode_sparse<T: Scalar>(
    clicks: &ClickSet,
    store: &ParamStore<T>,
    params: &PromptParams,
    size: ImageSize,
) -> Result<SparseEmbeddings<T>> {
    clicks.check_bounds(size)?;
    let pos = store.get(params.positive_type).data();
    let neg = store.get(params.negative_type).data();
    let non_point = store.get(params.non_point).data();
    let dim = non_point.len();
    let occupancy = slot_occupancy(clicks);
    let mut values = Tensor::zeros([NUM_SLOTS, dim]);
    let fill = |row: &mut [T], click: &Click, table: &[T]| {
        let pe = positional_encoding::<T>(
            click.x as f64 / size.width as f64,
            click.y as f64 / size.height as f64,
            dim,
        );
        for ((r, p), t) in row.iter_mut().zip(pe).zip(table) {
            *r = p + *t;
        }
    };
    for slot in 0..NUM_SLOTS {
        let row = values.row_mut(slot);
        match occupancy[slot] {
            SlotKind::Positive => fill(row, &clicks.positives[slot], pos),
            SlotKind::Negative => fill(row, &clicks.negatives[slot - SLOTS_PER_POLARITY], neg),
            SlotKind::NonPoint => row.copy_from_slice(non_point),
        }
    }
    Ok(SparseEmbeddings { values, occupancy })
}

/// Routes slot gradients to the learned polarity and non-point tables.
pub fn encode_sparse_backward<T: Scalar>(
    occupancy: &[SlotKind],
    d_values: &Tensor<T>,
    params: &PromptParams,
    grads: &mut Gradients<T>,
) {
    for (slot, kind) in occupancy.iter().enumerate() {
        let id = match kind {
            SlotKind::Positive => params.positive_type,
            SlotKind::Negative => params.negative_type,
            SlotKind::NonPoint => params.non_point,
        };
        grads.accumulate_slice(id, d_values.row(slot));
    }
}

/// Binary `[H × W × 2]` raster: channel 0 holds disks around positive clicks,
/// channel 1 around negative clicks. Overlapping disks merge.
pub fn click_raster<T: Scalar>(clicks: &ClickSet, size: ImageSize, radius: usize) -> Result<Tensor<T>> {
    if radius == 0 {
        return Err(Error::Validation("disk radius must be at least 1".into()));
    }
    clicks.check_bounds(size)?;
    let mut raster = Tensor::zeros([size.height, size.width, 2]);
    let r2 = (radius * radius) as isize;
    let data = raster.data_mut();
    for (ch, list) in [(0usize, clicks.positives()), (1, clicks.negatives())] {
        for c in list {
            let (cx, cy) = (c.x as isize, c.y as isize);
            let r = radius as isize;
            for y in (cy - r).max(0)..=(cy + r).min(size.height as isize - 1) {
                for x in (cx - r).max(0)..=(cx + r).min(size.width as isize - 1) {
                    let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    if d2 <= r2 {
                        data[((y as usize) * size.width + x as usize) * 2 + ch] = T::one();
                    }
                }
            }
        }
    }
    Ok(raster)
}

/// Rearranges `[H × W × C]` into `[(H/p)(W/p) × p·p·C]` non-overlapping patches.
pub fn patchify<T: Scalar>(x: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let (h, w, c) = match *x.shape() {
        [h, w, c] => (h, w, c),
        ref s => return Err(Error::Dimension(format!("patchify expects [H, W, C], got {s:?}"))),
    };
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::Dimension(format!("{h}×{w} image is not divisible into {patch}-pixel patches")));
    }
    let (gh, gw) = (h / patch, w / patch);
    let feat = patch * patch * c;
    let mut out = Tensor::zeros([gh * gw, feat]);
    let src = x.data();
    let dst = out.data_mut();
    for gy in 0..gh {
        for gx in 0..gw {
            let base = (gy * gw + gx) * feat;
            for dy in 0..patch {
                let row = ((gy * patch + dy) * w + gx * patch) * c;
                let off = base + dy * patch * c;
                dst[off..off + patch * c].copy_from_slice(&src[row..row + patch * c]);
            }
        }
    }
    Ok(out)
}

/// Dense prompt embedding: click raster → strided `p×p` convolution to `C` channels.
pub fn encode_dense<T: Scalar>(
    clicks: &ClickSet,
    size: ImageSize,
    radius: usize,
    patch: usize,
    store: &ParamStore<T>,
    params: &PromptParams,
) -> Result<DenseEmbedding<T>> {
    let raster = click_raster::<T>(clicks, size, radius)?;
    let patches = patchify(&raster, patch)?;
    let weight = store.get(params.dense_weight);
    let bias = store.get(params.dense_bias);
    if weight.rows() != patches.cols() {
        return Err(Error::Dimension(format!(
            "dense projection expects {} inputs, patches have {}",
            weight.rows(),
            patches.cols()
        )));
    }
    let dim = weight.cols();
    let mut out = Tensor::zeros([patches.rows(), dim]);
    for r in 0..patches.rows() {
        out.row_mut(r).copy_from_slice(bias.data());
    }
    gemm(T::one(), patches.as_mat(), weight.as_mat(), T::one(), out.as_mat_mut());
    let values = out.reshape([size.height / patch, size.width / patch, dim])?.ensure_finite("encode_dense")?;
    Ok(DenseEmbedding { values })
}

/// Accumulates convolution gradients for [`encode_dense`].
pub fn encode_dense_backward<T: Scalar>(
    clicks: &ClickSet,
    size: ImageSize,
    radius: usize,
    patch: usize,
    d_values: &Tensor<T>,
    params: &PromptParams,
    grads: &mut Gradients<T>,
) -> Result<()> {
    let raster = click_raster::<T>(clicks, size, radius)?;
    let patches = patchify(&raster, patch)?;
    let dim = d_values.cols();
    let mut dw = Tensor::zeros([patches.cols(), dim]);
    gemm(
        T::one(),
        patches.as_mat().t(),
        MatRef::dense(d_values.data(), patches.rows(), dim),
        T::zero(),
        dw.as_mat_mut(),
    );
    grads.accumulate(params.dense_weight, &dw)?;
    let mut db = vec![T::zero(); dim];
    for r in 0..d_values.rows() {
        for (a, &b) in db.iter_mut().zip(d_values.row(r)) {
            *a += b;
        }
    }
    grads.accumulate_slice(params.dense_bias, &db);
    Ok(())
}
