//! Object-aware attention: positive slots see only the previous foreground,
//! negative slots only the previous background. Without a previous mask the
//! layer is plain cross-attention.

use crate::attention::{cross_attention_backward, cross_attention_forward, CrossAttentionCache, CrossAttentionParams};
use crate::error::{Error, Result};
use crate::numerics::{bilinear_resize, Scalar, Tensor};
use crate::params::{Gradients, ParamStore};
use crate::prompts::{NUM_SLOTS, SLOTS_PER_POLARITY};

pub type ObjectAttentionParams = CrossAttentionParams;

/// Binary prediction of an earlier round, `[H × W]` with values in `{0, 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreviousMask {
    pub values: Tensor<f32>,
    pub round: usize,
}

impl PreviousMask {
    pub fn new(values: Tensor<f32>, round: usize) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(Error::Dimension(format!("previous mask must be [H, W], got {:?}", values.shape())));
        }
        if values.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Validation("previous mask must be binary".into()));
        }
        Ok(Self { values, round })
    }

    pub fn from_bools(width: usize, height: usize, mask: &[bool], round: usize) -> Result<Self> {
        let data = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::new(Tensor::new([height, width], data)?, round)
    }
}

/// Additive `{0, -inf}` bias `[48 × hw]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectMaskStack<T> {
    pub values: Tensor<T>,
}

impl<T: Scalar> ObjectMaskStack<T> {
    /// Foreground flags at feature resolution, read back from a positive row.
    pub fn foreground(&self) -> Vec<bool> {
        self.values.row(0).iter().map(|v| *v == T::zero()).collect()
    }
}

/// Resizes the mask to feature resolution (bilinear, then `>= 0.5`) and
/// writes `0` where a slot may attend and `-inf` elsewhere.
pub fn build_object_stack<T: Scalar>(prev: &PreviousMask, feat_h: usize, feat_w: usize) -> Result<ObjectMaskStack<T>> {
    let small = bilinear_resize(&prev.values, feat_h, feat_w)?;
    let hw = feat_h * feat_w;
    let mut values = Tensor::<T>::zeros([NUM_SLOTS, hw]);
    let blocked = T::neg_infinity();
    for (j, &v) in small.data().iter().enumerate() {
        let fg = v >= 0.5;
        for slot in 0..NUM_SLOTS {
            let allowed = (slot < SLOTS_PER_POLARITY) == fg;
            values.data_mut()[slot * hw + j] = if allowed { T::zero() } else { blocked };
        }
    }
    Ok(ObjectMaskStack { values })
}

pub struct ObjectAttentionCache<T> {
    inner: CrossAttentionCache<T>,
}

impl<T: Scalar> ObjectAttentionCache<T> {
    pub fn probs(&self) -> &Tensor<T> {
        self.inner.probs()
    }
}

/// `LN(softmax(Q·Kᵀ/√C + H)·V + S)`; `stack = None` uses a zero bias.
pub fn object_attention_forward<T: Scalar>(
    store: &ParamStore<T>,
    params: &ObjectAttentionParams,
    slots: &Tensor<T>,
    features: &Tensor<T>,
    stack: Option<&ObjectMaskStack<T>>,
) -> Result<(Tensor<T>, ObjectAttentionCache<T>)> {
    let (out, inner) = match stack {
        Some(s) => cross_attention_forward(store, params, slots, features, &s.values)?,
        None => {
            let zero = Tensor::zeros([slots.rows(), features.rows()]);
            cross_attention_forward(store, params, slots, features, &zero)?
        }
    };
    Ok((out, ObjectAttentionCache { inner }))
}

/// Returns `(d_slots, d_features)`; the mask itself carries no gradient.
pub fn object_attention_backward<T: Scalar>(
    store: &ParamStore<T>,
    params: &ObjectAttentionParams,
    cache: &ObjectAttentionCache<T>,
    d_out: &Tensor<T>,
    grads: &mut Gradients<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let g = cross_attention_backward(store, params, &cache.inner, d_out, grads)?;
    Ok((g.d_slots, g.d_features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::layer_norm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(l: usize, c: usize, seed: u64) -> (ParamStore<f64>, ObjectAttentionParams, Tensor<f64>, Tensor<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = ObjectAttentionParams::register(&mut store, "obj", c, &mut rng);
        let mut scratch = ParamStore::<f64>::new();
        let s = scratch.register_normal("s", vec![NUM_SLOTS, c], 1.0, &mut rng);
        let f = scratch.register_normal("f", vec![l, c], 1.0, &mut rng);
        (store, p, scratch.get(s).clone(), scratch.get(f).clone())
    }

    fn mask(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> PreviousMask {
        let m: Vec<bool> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        PreviousMask::from_bools(w, h, &m, 0).unwrap()
    }

    #[test]
    fn all_foreground_and_background() {
        let fg: ObjectMaskStack<f64> = build_object_stack(&mask(4, 4, |_, _| true), 2, 2).unwrap();
        assert!(fg.values.data()[..24 * 4].iter().all(|&v| v == 0.0));
        assert!(fg.values.data()[24 * 4..].iter().all(|&v| v == f64::NEG_INFINITY));
        let bg: ObjectMaskStack<f64> = build_object_stack(&mask(4, 4, |_, _| false), 2, 2).unwrap();
        assert!(bg.values.data()[..24 * 4].iter().all(|&v| v == f64::NEG_INFINITY));
        assert!(bg.values.data()[24 * 4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkerboard_rows_are_complements() {
        let s: ObjectMaskStack<f64> = build_object_stack(&mask(6, 6, |x, y| (x + y) % 2 == 0), 6, 6).unwrap();
        for pos in 0..24 {
            for neg in 24..48 {
                for j in 0..36 {
                    let allowed = [s.values.row(pos)[j] == 0.0, s.values.row(neg)[j] == 0.0];
                    assert_eq!(allowed.iter().filter(|a| **a).count(), 1);
                }
            }
        }
    }

    #[test]
    fn empty_region_returns_normalized_residual() {
        let (store, p, s, f) = setup(4, 8, 1);
        let stack: ObjectMaskStack<f64> = build_object_stack(&mask(2, 2, |_, _| false), 2, 2).unwrap();
        let (out, cache) = object_attention_forward(&store, &p, &s, &f, Some(&stack)).unwrap();
        let want = layer_norm(&s, store.get(p.norm_gain), store.get(p.norm_bias)).unwrap();
        for slot in 0..24 {
            assert!(cache.probs().row(slot).iter().all(|&v| v == 0.0));
            assert_eq!(out.row(slot), want.row(slot));
        }
    }

    #[test]
    fn single_foreground_pixel_takes_all_mass() {
        let (store, p, s, f) = setup(4, 8, 2);
        let stack: ObjectMaskStack<f64> = build_object_stack(&mask(2, 2, |x, y| x == 1 && y == 0), 2, 2).unwrap();
        let (_, cache) = object_attention_forward(&store, &p, &s, &f, Some(&stack)).unwrap();
        assert_eq!(cache.probs().row(0), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn none_equals_zero_bias() {
        let (store, p, s, f) = setup(4, 8, 3);
        let (a, _) = object_attention_forward(&store, &p, &s, &f, None).unwrap();
        let fg: ObjectMaskStack<f64> = build_object_stack(&mask(2, 2, |_, _| true), 2, 2).unwrap();
        let (b, _) = object_attention_forward(&store, &p, &s, &f, Some(&fg)).unwrap();
        for slot in 0..24 {
            assert_eq!(a.row(slot), b.row(slot));
        }
    }

    #[test]
    fn positive_slots_ignore_background_features() {
        let (store, p, s, mut f) = setup(4, 8, 4);
        let stack: ObjectMaskStack<f64> = build_object_stack(&mask(2, 2, |x, _| x == 0), 2, 2).unwrap();
        let (a, _) = object_attention_forward(&store, &p, &s, &f, Some(&stack)).unwrap();
        for v in f.row_mut(1) {
            *v += 3.0;
        }
        let (b, _) = object_attention_forward(&store, &p, &s, &f, Some(&stack)).unwrap();
        for slot in 0..24 {
            assert_eq!(a.row(slot), b.row(slot));
        }
        assert_ne!(a.row(30), b.row(30));
    }

    #[test]
    fn non_binary_mask_is_rejected() {
        assert!(PreviousMask::new(Tensor::new([1, 2], vec![0.0, 0.5]).unwrap(), 0).is_err());
    }
}
