//! Patch encoder: patchify, linear embedding, sinusoidal patch positions and
//! a stack of pre-norm self-attention blocks.

use crate::error::{Error, Result};
use crate::numerics::{gemm, masked_softmax_backward, softmax_rows_in_place, LayerNormCache, MatMut, MatRef, Scalar, Tensor};
use crate::params::{Gradients, ParamStore};
use crate::prompts::{patchify, positional_encoding};

use super::layers::{Linear, Mlp, MlpCache, Norm};
use super::ModelConfig;

#[derive(Clone, Debug)]
pub struct EncoderBlockParams {
    pub norm1: Norm,
    pub qkv: Linear,
    pub proj: Linear,
    pub norm2: Norm,
    pub mlp: Mlp,
}

#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub patch_embed: Linear,
    pub blocks: Vec<EncoderBlockParams>,
    pub final_norm: Norm,
}

impl EncoderParams {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut impl rand::Rng) -> Self {
        let c = cfg.embed_dim;
        let p = cfg.patch_size;
        let patch_embed = Linear::register(store, "encoder.patch_embed", 3 * p * p, c, rng);
        let blocks = (0..cfg.encoder_blocks)
            .map(|i| {
                let n = format!("encoder.block{i}");
                EncoderBlockParams {
                    norm1: Norm::register(store, &format!("{n}.norm1"), c),
                    qkv: Linear::register(store, &format!("{n}.qkv"), c, 3 * c, rng),
                    proj: Linear::register(store, &format!("{n}.proj"), c, c, rng),
                    norm2: Norm::register(store, &format!("{n}.norm2"), c),
                    mlp: Mlp::register(store, &format!("{n}.mlp"), [c, cfg.ffn_hidden, c], rng),
                }
            })
            .collect();
        Self { patch_embed, blocks, final_norm: Norm::register(store, "encoder.final_norm", c) }
    }
}

/// Position table `[(H/p)(W/p) × C]`, evaluated at patch centers in the same
/// normalized coordinates the click encoding uses.
pub fn patch_positions<T: Scalar>(height: usize, width: usize, patch: usize, dim: usize) -> Tensor<T> {
    let (gh, gw) = (height / patch, width / patch);
    let mut out = Tensor::zeros([gh * gw, dim]);
    for gy in 0..gh {
        for gx in 0..gw {
            let u = (gx * patch) as f64 + patch as f64 / 2.0;
            let v = (gy * patch) as f64 + patch as f64 / 2.0;
            let pe = positional_encoding::<T>(u / width as f64, v / height as f64, dim);
            out.row_mut(gy * gw + gx).copy_from_slice(&pe);
        }
    }
    out
}

struct BlockCache<T> {
    norm1: LayerNormCache<T>,
    normed: Tensor<T>,
    qkv: Tensor<T>,
    probs: Vec<Tensor<T>>,
    heads_out: Tensor<T>,
    norm2: LayerNormCache<T>,
    mlp: MlpCache<T>,
}

pub struct EncoderCache<T> {
    patches: Tensor<T>,
    blocks: Vec<BlockCache<T>>,
    final_norm: LayerNormCache<T>,
}

fn block_forward<T: Scalar>(
    store: &ParamStore<T>,
    p: &EncoderBlockParams,
    heads: usize,
    x: &Tensor<T>,
) -> Result<(Tensor<T>, BlockCache<T>)> {
    let (l, c) = (x.rows(), x.cols());
    let dh = c / heads;
    let scale = T::from_f64_lossy(1.0 / (dh as f64).sqrt());
    let (normed, norm1) = p.norm1.forward(store, x)?;
    let qkv = p.qkv.forward(store, &normed);
    let mut heads_out = Tensor::zeros([l, c]);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let all = MatRef::dense(qkv.data(), l, 3 * c);
        let q = all.cols_range(h * dh, dh);
        let k = all.cols_range(c + h * dh, dh);
        let v = all.cols_range(2 * c + h * dh, dh);
        let mut pr = Tensor::zeros([l, l]);
        gemm(scale, q, k.t(), T::zero(), pr.as_mat_mut());
        softmax_rows_in_place(&mut pr);
        gemm(T::one(), pr.as_mat(), v, T::zero(), MatMut::dense(heads_out.data_mut(), l, c).cols_range(h * dh, dh));
        probs.push(pr);
    }
    let mut x1 = p.proj.forward(store, &heads_out);
    x1.add_assign(x)?;
    let (n2, norm2) = p.norm2.forward(store, &x1)?;
    let (f, mlp) = p.mlp.forward(store, &n2);
    let out = f.add(&x1)?;
    Ok((out, BlockCache { norm1, normed, qkv, probs, heads_out, norm2, mlp }))
}

fn block_backward<T: Scalar>(
    store: &ParamStore<T>,
    p: &EncoderBlockParams,
    heads: usize,
    cache: &BlockCache<T>,
    d_out: &Tensor<T>,
    grads: &mut Gradients<T>,
) -> Result<Tensor<T>> {
    let (l, c) = (d_out.rows(), d_out.cols());
    let dh = c / heads;
    let scale = T::from_f64_lossy(1.0 / (dh as f64).sqrt());
    let d_n2 = p.mlp.backward(store, &cache.mlp, d_out, grads)?;
    let mut dx1 = p.norm2.backward(store, &cache.norm2, &d_n2, grads)?;
    dx1.add_assign(d_out)?;
    let d_heads = p.proj.backward(store, &cache.heads_out, &dx1, grads)?;
    let mut d_qkv = Tensor::zeros([l, 3 * c]);
    for h in 0..heads {
        let all = MatRef::dense(cache.qkv.data(), l, 3 * c);
        let q = all.cols_range(h * dh, dh);
        let k = all.cols_range(c + h * dh, dh);
        let v = all.cols_range(2 * c + h * dh, dh);
        let d_o = MatRef::dense(d_heads.data(), l, c).cols_range(h * dh, dh);
        let pr = &cache.probs[h];
        let mut d_pr = Tensor::zeros([l, l]);
        gemm(T::one(), d_o, v.t(), T::zero(), d_pr.as_mat_mut());
        gemm(T::one(), pr.as_mat().t(), d_o, T::zero(), MatMut::dense(d_qkv.data_mut(), l, 3 * c).cols_range(2 * c + h * dh, dh));
        let d_s = masked_softmax_backward(pr, &d_pr)?;
        gemm(scale, d_s.as_mat(), k, T::zero(), MatMut::dense(d_qkv.data_mut(), l, 3 * c).cols_range(h * dh, dh));
        gemm(scale, d_s.as_mat().t(), q, T::zero(), MatMut::dense(d_qkv.data_mut(), l, 3 * c).cols_range(c + h * dh, dh));
    }
    let d_normed = p.qkv.backward(store, &cache.normed, &d_qkv, grads)?;
    let mut dx = p.norm1.backward(store, &cache.norm1, &d_normed, grads)?;
    dx.add_assign(&dx1)?;
    Ok(dx)
}

/// Encodes an `[H × W × 3]` image into `[H/p × W/p × C]` features.
pub fn encoder_forward<T: Scalar>(
    store: &ParamStore<T>,
    params: &EncoderParams,
    cfg: &ModelConfig,
    image: &Tensor<T>,
) -> Result<(Tensor<T>, EncoderCache<T>)> {
    let (h, w) = match *image.shape() {
        [h, w, 3] => (h, w),
        ref s => return Err(Error::Dimension(format!("image must be [H, W, 3], got {s:?}"))),
    };
    let p = cfg.patch_size;
    let patches = patchify(image, p)?;
    let mut x = params.patch_embed.forward(store, &patches);
    x.add_assign(&patch_positions(h, w, p, cfg.embed_dim))?;
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for bp in &params.blocks {
        let (y, cache) = block_forward(store, bp, cfg.encoder_heads, &x)?;
        x = y;
        blocks.push(cache);
    }
    let (out, final_norm) = params.final_norm.forward(store, &x)?;
    let out = out.reshape([h / p, w / p, cfg.embed_dim])?.ensure_finite("encoder")?;
    Ok((out, EncoderCache { patches, blocks, final_norm }))
}

/// Accumulates encoder parameter gradients from `d_features` (`[h × w × C]`).
pub fn encoder_backward<T: Scalar>(
    store: &ParamStore<T>,
    params: &EncoderParams,
    cfg: &ModelConfig,
    cache: &EncoderCache<T>,
    d_features: &Tensor<T>,
    grads: &mut Gradients<T>,
) -> Result<()> {
    let d = d_features.clone().reshape([d_features.len() / cfg.embed_dim, cfg.embed_dim])?;
    let mut dx = params.final_norm.backward(store, &cache.final_norm, &d, grads)?;
    for (bp, bc) in params.blocks.iter().zip(&cache.blocks).rev() {
        dx = block_backward(store, bp, cfg.encoder_heads, bc, &dx, grads)?;
    }
    params.patch_embed.backward(store, &cache.patches, &dx, grads)?;
    Ok(())
}
