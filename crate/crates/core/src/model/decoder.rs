//! Mask decoder: two stride-2 transposed convolutions lift the fused
//! features to half resolution, a two-layer MLP turns the positive slots into
//! a mask embedding, and their inner product gives the logits.

use crate::error::Result;
use crate::numerics::{bilinear_resize, bilinear_resize_backward, gelu, gelu_backward, gemm, Scalar, Tensor};
use crate::params::{Gradients, ParamStore};
use crate::prompts::SlotKind;

use super::layers::{Linear, Mlp, MlpCache};
use super::ModelConfig;

#[derive(Clone, Debug)]
pub struct DecoderParams {
    /// `k=2, s=2` transposed convolutions expressed as `C_in → 4·C_out` maps.
    pub up1: Linear,
    pub up2: Linear,
    pub mask_mlp: Mlp,
}

impl DecoderParams {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut impl rand::Rng) -> Self {
        let c = cfg.embed_dim;
        let [c1, c2] = cfg.decoder_channels;
        Self {
            up1: Linear::register(store, "decoder.up1", c, 4 * c1, rng),
            up2: Linear::register(store, "decoder.up2", c1, 4 * c2, rng),
            mask_mlp: Mlp::register(store, "decoder.mask_mlp", [c, c, c2], rng),
        }
    }
}

/// `[h·w × 4c]` → `[2h × 2w × c]`; channel block `2·dy + dx` fills sub-pixel `(dy, dx)`.
pub fn pixel_shuffle<T: Scalar>(y: &Tensor<T>, h: usize, w: usize, c: usize) -> Tensor<T> {
    let mut out = Tensor::zeros([2 * h, 2 * w, c]);
    let dst = out.data_mut();
    for gy in 0..h {
        for gx in 0..w {
            let row = y.row(gy * w + gx);
            for dy in 0..2 {
                for dx in 0..2 {
                    let o = ((2 * gy + dy) * 2 * w + 2 * gx + dx) * c;
                    let s = (dy * 2 + dx) * c;
                    dst[o..o + c].copy_from_slice(&row[s..s + c]);
                }
            }
        }
    }
    out
}

/// Adjoint of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Scalar>(x: &Tensor<T>, h: usize, w: usize, c: usize) -> Tensor<T> {
    let mut out = Tensor::zeros([h * w, 4 * c]);
    let src = x.data();
    for gy in 0..h {
        for gx in 0..w {
            let row = out.row_mut(gy * w + gx);
            for dy in 0..2 {
                for dx in 0..2 {
                    let o = ((2 * gy + dy) * 2 * w + 2 * gx + dx) * c;
                    let s = (dy * 2 + dx) * c;
                    row[s..s + c].copy_from_slice(&src[o..o + c]);
                }
            }
        }
    }
    out
}

/// Slots averaged into the mask embedding: occupied positives, else any
/// occupied slot, else all of them.
pub fn mask_slots(occupancy: &[SlotKind]) -> Vec<usize> {
    let pick = |f: &dyn Fn(&SlotKind) -> bool| -> Vec<usize> {
        occupancy.iter().enumerate().filter(|(_, k)| f(k)).map(|(i, _)| i).collect()
    };
    let pos = pick(&|k| *k == SlotKind::Positive);
    if !pos.is_empty() {
        return pos;
    }
    let any = pick(&|k| *k != SlotKind::NonPoint);
    if !any.is_empty() {
        return any;
    }
    (0..occupancy.len()).collect()
}

pub struct DecoderCache<T> {
    fused: Tensor<T>,
    pre1: Tensor<T>,
    act1: Tensor<T>,
    pre2: Tensor<T>,
    pixels: Tensor<T>,
    slots_used: Vec<usize>,
    mlp: MlpCache<T>,
    embedding: Tensor<T>,
    small_shape: [usize; 2],
    grid: [usize; 2],
}

/// Logits `[H × W]` from fused features `[h × w × C]` and final slots `[48 × C]`.
pub fn decoder_forward<T: Scalar>(
    store: &ParamStore<T>,
    params: &DecoderParams,
    cfg: &ModelConfig,
    fused: &Tensor<T>,
    slots: &Tensor<T>,
    occupancy: &[SlotKind],
    out_h: usize,
    out_w: usize,
) -> Result<(Tensor<T>, DecoderCache<T>)> {
    let (h, w) = (fused.shape()[0], fused.shape()[1]);
    let [c1, c2] = cfg.decoder_channels;
    let pre1 = pixel_shuffle(&params.up1.forward(store, fused), h, w, c1);
    let act1 = gelu(&pre1);
    let pre2 = pixel_shuffle(&params.up2.forward(store, &act1), 2 * h, 2 * w, c2);
    let pixels = gelu(&pre2);

    let used = mask_slots(occupancy);
    let inv = T::one() / T::from_usize(used.len()).unwrap();
    let mut mean = Tensor::zeros([1, slots.cols()]);
    for &i in &used {
        for (a, &b) in mean.data_mut().iter_mut().zip(slots.row(i)) {
            *a += b * inv;
        }
    }
    let (embedding, mlp) = params.mask_mlp.forward(store, &mean);

    let mut small = Tensor::zeros([16 * h * w, 1]);
    gemm(T::one(), pixels.as_mat(), embedding.as_mat().t(), T::zero(), small.as_mat_mut());
    let small = small.reshape([4 * h, 4 * w])?;
    let logits = bilinear_resize(&small, out_h, out_w)?.ensure_finite("decoder")?;
    let cache = DecoderCache {
        fused: fused.clone(),
        pre1,
        act1,
        pre2,
        pixels,
        slots_used: used,
        mlp,
        embedding,
        small_shape: [4 * h, 4 * w],
        grid: [h, w],
    };
    Ok((logits, cache))
}

/// Returns `(d_slots [48 × C], d_fused [h × w × C])`.
pub fn decoder_backward<T: Scalar>(
    store: &ParamStore<T>,
    params: &DecoderParams,
    cfg: &ModelConfig,
    cache: &DecoderCache<T>,
    num_slots: usize,
    d_logits: &Tensor<T>,
    grads: &mut Gradients<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let [h, w] = cache.grid;
    let [c1, c2] = cfg.decoder_channels;
    let d_small = bilinear_resize_backward(&cache.small_shape, d_logits)?;
    let d_small = d_small.reshape([16 * h * w, 1])?;

    let mut d_emb = Tensor::zeros([1, c2]);
    gemm(T::one(), d_small.as_mat().t(), cache.pixels.as_mat(), T::zero(), d_emb.as_mat_mut());
    let mut d_pixels = Tensor::zeros([16 * h * w, c2]);
    gemm(T::one(), d_small.as_mat(), cache.embedding.as_mat(), T::zero(), d_pixels.as_mat_mut());
    let d_pixels = d_pixels.reshape([4 * h, 4 * w, c2])?;

    let d_pre2 = pixel_unshuffle(&gelu_backward(&cache.pre2, &d_pixels)?, 2 * h, 2 * w, c2);
    let d_act1 = params.up2.backward(store, &cache.act1, &d_pre2, grads)?;
    let d_act1 = d_act1.reshape([2 * h, 2 * w, c1])?;
    let d_pre1 = pixel_unshuffle(&gelu_backward(&cache.pre1, &d_act1)?, h, w, c1);
    let d_fused = params.up1.backward(store, &cache.fused, &d_pre1, grads)?;
    let d_fused = d_fused.reshape(cache.fused.shape().to_vec())?;

    let d_mean = params.mask_mlp.backward(store, &cache.mlp, &d_emb, grads)?;
    let dim = d_mean.cols();
    let mut d_slots = Tensor::zeros([num_slots, dim]);
    let inv = T::one() / T::from_usize(cache.slots_used.len()).unwrap();
    for &i in &cache.slots_used {
        for (a, &b) in d_slots.row_mut(i).iter_mut().zip(d_mean.data()) {
            *a += b * inv;
        }
    }
    Ok((d_slots, d_fused))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_round_trip() {
        let y = Tensor::<f64>::from_f64([6, 8], &(0..48).map(|v| v as f64).collect::<Vec<_>>()).unwrap();
        let x = pixel_shuffle(&y, 2, 3, 2);
        assert_eq!(x.shape(), &[4, 6, 2]);
        // Token (0,1), sub-pixel (1,0) lands at pixel (1, 2).
        assert_eq!(&x.data()[(6 + 2) * 2..(6 + 2) * 2 + 2], &y.row(1)[4..6]);
        assert_eq!(pixel_unshuffle(&x, 2, 3, 2), y);
    }

    #[test]
    fn slot_selection_fallbacks() {
        let mut occ = vec![SlotKind::NonPoint; 48];
        assert_eq!(mask_slots(&occ).len(), 48);
        occ[24] = SlotKind::Negative;
        assert_eq!(mask_slots(&occ), vec![24]);
        occ[0] = SlotKind::Positive;
        occ[1] = SlotKind::Positive;
        assert_eq!(mask_slots(&occ), vec![0, 1]);
    }
}
