//! Prompt fusion: dense embedding added to the features, then a stack of
//! order-attention → object-attention → FFN blocks over the sparse slots.

use crate::error::Result;
use crate::numerics::{LayerNormCache, Scalar, Tensor};
use crate::objectness::{object_attention_backward, object_attention_forward, ObjectAttentionCache, ObjectAttentionParams, ObjectMaskStack};
use crate::order::{order_attention_backward, order_attention_forward, OrderAttentionCache, OrderAttentionParams, OrderMaskStack, SigmaMode};
use crate::params::{Gradients, ParamStore};

use super::layers::{Mlp, MlpCache, Norm};

#[derive(Clone, Debug)]
pub struct FusionBlockParams {
    pub order: OrderAttentionParams,
    pub object: ObjectAttentionParams,
    pub mlp: Mlp,
    pub norm: Norm,
}

impl FusionBlockParams {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, index: usize, dim: usize, hidden: usize, rng: &mut impl rand::Rng) -> Self {
        let n = format!("fusion.block{index}");
        Self {
            order: OrderAttentionParams::register(store, &format!("{n}.order"), dim, rng),
            object: ObjectAttentionParams::register(store, &format!("{n}.object"), dim, rng),
            mlp: Mlp::register(store, &format!("{n}.mlp"), [dim, hidden, dim], rng),
            norm: Norm::register(store, &format!("{n}.norm"), dim),
        }
    }
}

pub struct FusionInputs<'a, T> {
    pub features: &'a Tensor<T>,
    pub dense: Option<&'a Tensor<T>>,
    pub slots: &'a Tensor<T>,
    pub order_stack: &'a OrderMaskStack<T>,
    pub object_stack: Option<&'a ObjectMaskStack<T>>,
    pub sigma: SigmaMode,
}

struct BlockCache<T> {
    order: OrderAttentionCache<T>,
    object: ObjectAttentionCache<T>,
    mlp: MlpCache<T>,
    norm: LayerNormCache<T>,
}

pub struct FusionCache<T> {
    blocks: Vec<BlockCache<T>>,
}

impl<T: Scalar> FusionCache<T> {
    /// Order-attention weights `[48 × hw]` of block `i`.
    pub fn order_probs(&self, i: usize) -> &Tensor<T> {
        self.blocks[i].order.probs()
    }

    pub fn object_probs(&self, i: usize) -> &Tensor<T> {
        self.blocks[i].object.probs()
    }
}

/// Returns `(S_final, F_fused, cache)`.
pub fn fuse_forward<T: Scalar>(
    store: &ParamStore<T>,
    blocks: &[FusionBlockParams],
    inputs: &FusionInputs<'_, T>,
) -> Result<(Tensor<T>, Tensor<T>, FusionCache<T>)> {
    let fused = match inputs.dense {
        Some(d) => inputs.features.add(d)?,
        None => inputs.features.clone(),
    };
    let mut s = inputs.slots.clone();
    let mut caches = Vec::with_capacity(blocks.len());
    for b in blocks {
        let (s1, order) = order_attention_forward(store, &b.order, &s, &fused, inputs.order_stack, inputs.sigma)?;
        let (s2, object) = object_attention_forward(store, &b.object, &s1, &fused, inputs.object_stack)?;
        let (f, mlp) = b.mlp.forward(store, &s2);
        let (s3, norm) = b.norm.forward(store, &f.add(&s2)?)?;
        s = s3;
        caches.push(BlockCache { order, object, mlp, norm });
    }
    Ok((s, fused, FusionCache { blocks: caches }))
}

/// Returns `(d_slots, d_fused_features)`.
pub fn fuse_backward<T: Scalar>(
    store: &ParamStore<T>,
    blocks: &[FusionBlockParams],
    cache: &FusionCache<T>,
    order_stack: &OrderMaskStack<T>,
    d_slots_final: &Tensor<T>,
    d_fused: Tensor<T>,
    grads: &mut Gradients<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut d_fused = d_fused;
    let mut ds = d_slots_final.clone();
    for (b, c) in blocks.iter().zip(&cache.blocks).rev() {
        let d_sum = b.norm.backward(store, &c.norm, &ds, grads)?;
        let mut d_s2 = b.mlp.backward(store, &c.mlp, &d_sum, grads)?;
        d_s2.add_assign(&d_sum)?;
        let (d_s1, df) = object_attention_backward(store, &b.object, &c.object, &d_s2, grads)?;
        add_flat(&mut d_fused, &df);
        let (d_s0, df) = order_attention_backward(store, &b.order, &c.order, order_stack, &d_s1, grads)?;
        add_flat(&mut d_fused, &df);
        ds = d_s0;
    }
    Ok((ds, d_fused))
}

fn add_flat<T: Scalar>(dst: &mut Tensor<T>, src: &Tensor<T>) {
    debug_assert_eq!(dst.len(), src.len());
    for (a, &b) in dst.data_mut().iter_mut().zip(src.data()) {
        *a += b;
    }
}
