//! Single-head cross-attention from slot embeddings to image features with an
//! additive logit bias, a residual connection and a trailing LayerNorm.
//!
//! Both the order-aware and the object-aware blocks are this layer with a
//! different bias: `-σ·M` for order maps, `{0, -inf}` for object masks.

use crate::error::{Error, Result};
use crate::numerics::{
    gemm, layer_norm_backward, layer_norm_forward, masked_softmax_backward, softmax_rows_in_place,
    LayerNormCache, Scalar, Tensor,
};
use crate::params::{Gradients, ParamId, ParamStore};

#[derive(Clone, Copy, Debug)]
pub struct CrossAttentionParams {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
}

impl CrossAttentionParams {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, dim: usize, rng: &mut impl rand::Rng) -> Self {
        Self {
            query: store.register_linear(&format!("{prefix}.query"), dim, dim, rng),
            key: store.register_linear(&format!("{prefix}.key"), dim, dim, rng),
            value: store.register_linear(&format!("{prefix}.value"), dim, dim, rng),
            norm_gain: store.register_full(&format!("{prefix}.norm.gain"), vec![dim], 1.0),
            norm_bias: store.register_full(&format!("{prefix}.norm.bias"), vec![dim], 0.0),
        }
    }
}

/// Activations saved by [`cross_attention_forward`].
#[derive(Clone, Debug)]
pub struct CrossAttentionCache<T> {
    slots: Tensor<T>,
    features: Tensor<T>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    probs: Tensor<T>,
    norm: LayerNormCache<T>,
}

impl<T: Scalar> CrossAttentionCache<T> {
    /// Attention weights `[N × L]` after the bias was applied.
    pub fn probs(&self) -> &Tensor<T> {
        &self.probs
    }
}

/// Gradients w.r.t. the layer inputs.
pub struct CrossAttentionGrads<T> {
    pub d_slots: Tensor<T>,
    pub d_features: Tensor<T>,
    pub d_bias: Tensor<T>,
}

pub(crate) fn logit_scale<T: Scalar>(dim: usize) -> T {
    T::from_f64_lossy(1.0 / (dim as f64).sqrt())
}

fn project<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros([x.rows(), w.cols()]);
    gemm(T::one(), x.as_mat(), w.as_mat(), T::zero(), out.as_mat_mut());
    out
}

/// Scaled logits `Q·Kᵀ/√C` without any bias.
pub fn attention_logits<T: Scalar>(
    store: &ParamStore<T>,
    params: &CrossAttentionParams,
    slots: &Tensor<T>,
    features: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_inputs(store, params, slots, features, None)?;
    let q = project(slots, store.get(params.query));
    let k = project(features, store.get(params.key));
    let mut logits = Tensor::zeros([slots.rows(), features.rows()]);
    gemm(logit_scale(q.cols()), q.as_mat(), k.as_mat().t(), T::zero(), logits.as_mat_mut());
    Ok(logits)
}

fn check_inputs<T: Scalar>(
    store: &ParamStore<T>,
    params: &CrossAttentionParams,
    slots: &Tensor<T>,
    features: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<()> {
    let dim = store.get(params.query).rows();
    if slots.cols() != dim || features.cols() != dim {
        return Err(Error::Dimension(format!(
            "cross-attention over {dim} channels got slots {:?} and features {:?}",
            slots.shape(),
            features.shape()
        )));
    }
    if let Some(b) = bias {
        if b.rows() != slots.rows() || b.cols() != features.rows() {
            return Err(Error::Dimension(format!(
                "attention bias {:?} does not match {} slots × {} keys",
                b.shape(),
                slots.rows(),
                features.rows()
            )));
        }
    }
    Ok(())
}

/// `LN(softmax(Q·Kᵀ/√C + bias)·V + S)` with `Q = S·Wq`, `K = F·Wk`, `V = F·Wv`.
///
/// `slots` is `[N × C]`, `features` `[L × C]` and `bias` `[N × L]`. Rows whose
/// bias is `-inf` everywhere get a zero attention term, so their output is
/// `LN(S)` for that slot.
pub fn cross_attention_forward<T: Scalar>(
    store: &ParamStore<T>,
    params: &CrossAttentionParams,
    slots: &Tensor<T>,
    features: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, CrossAttentionCache<T>)> {
    check_inputs(store, params, slots, features, Some(bias))?;
    if bias.data().iter().any(|v| v.is_nan() || *v == T::infinity()) {
        return Err(Error::Numeric { op: "cross_attention bias" });
    }
    let q = project(slots, store.get(params.query));
    let k = project(features, store.get(params.key));
    let v = project(features, store.get(params.value));
    let (n, l) = (slots.rows(), features.rows());
    let mut probs = Tensor::zeros([n, l]);
    probs.data_mut().copy_from_slice(bias.data());
    gemm(logit_scale(q.cols()), q.as_mat(), k.as_mat().t(), T::one(), probs.as_mat_mut());
    softmax_rows_in_place(&mut probs);
    let mut residual = slots.clone().reshape([n, slots.cols()])?;
    gemm(T::one(), probs.as_mat(), v.as_mat(), T::one(), residual.as_mat_mut());
    let (out, norm) = layer_norm_forward(&residual, store.get(params.norm_gain), store.get(params.norm_bias))?;
    let cache = CrossAttentionCache {
        slots: slots.clone(),
        features: features.clone(),
        q,
        k,
        v,
        probs,
        norm,
    };
    Ok((out, cache))
}

pub fn cross_attention_backward<T: Scalar>(
    store: &ParamStore<T>,
    params: &CrossAttentionParams,
    cache: &CrossAttentionCache<T>,
    d_out: &Tensor<T>,
    grads: &mut Gradients<T>,
) -> Result<CrossAttentionGrads<T>> {
    let (d_res, d_gain, d_beta) = layer_norm_backward(&cache.norm, store.get(params.norm_gain), d_out)?;
    grads.accumulate(params.norm_gain, &d_gain)?;
    grads.accumulate(params.norm_bias, &d_beta)?;
    let (n, c) = (cache.slots.rows(), cache.slots.cols());
    let l = cache.features.rows();

    // Through O = P·V.
    let mut d_probs = Tensor::zeros([n, l]);
    gemm(T::one(), d_res.as_mat(), cache.v.as_mat().t(), T::zero(), d_probs.as_mat_mut());
    let mut dv = Tensor::zeros([l, c]);
    gemm(T::one(), cache.probs.as_mat().t(), d_res.as_mat(), T::zero(), dv.as_mat_mut());

    let d_logits = masked_softmax_backward(&cache.probs, &d_probs)?;
    let scale = logit_scale::<T>(c);
    let mut dq = Tensor::zeros([n, c]);
    gemm(scale, d_logits.as_mat(), cache.k.as_mat(), T::zero(), dq.as_mat_mut());
    let mut dk = Tensor::zeros([l, c]);
    gemm(scale, d_logits.as_mat().t(), cache.q.as_mat(), T::zero(), dk.as_mat_mut());

    let mut dw = Tensor::zeros([c, c]);
    gemm(T::one(), cache.slots.as_mat().t(), dq.as_mat(), T::zero(), dw.as_mat_mut());
    grads.accumulate(params.query, &dw)?;
    gemm(T::one(), cache.features.as_mat().t(), dk.as_mat(), T::zero(), dw.as_mat_mut());
    grads.accumulate(params.key, &dw)?;
    gemm(T::one(), cache.features.as_mat().t(), dv.as_mat(), T::zero(), dw.as_mat_mut());
    grads.accumulate(params.value, &dw)?;

    // Residual path plus query projection.
    let mut d_slots = d_res.reshape(cache.slots.shape().to_vec())?;
    gemm(T::one(), dq.as_mat(), store.get(params.query).as_mat().t(), T::one(), d_slots.as_mat_mut());
    let mut d_features = Tensor::zeros(cache.features.shape().to_vec());
    gemm(T::one(), dk.as_mat(), store.get(params.key).as_mat().t(), T::zero(), d_features.as_mat_mut());
    gemm(T::one(), dv.as_mat(), store.get(params.value).as_mat().t(), T::one(), d_features.as_mat_mut());
    Ok(CrossAttentionGrads { d_slots, d_features, d_bias: d_logits })
}
