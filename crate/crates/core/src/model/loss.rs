//! Normalized focal loss.
//!
//! With `p_t` the predicted probability of the true class, `w = (1 − p_t)^γ`
//! and `ℓ = −ln p_t`, the loss is `Σ w·ℓ / (Σ w + ε)`. The gradient flows
//! through both the numerator and the normalizer.

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softplus, Scalar, Tensor};

use super::LossConfig;

fn check<T: Scalar>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    logits.check_same_shape(target, "nfl_loss")?;
    if target.data().iter().any(|&t| t != T::zero() && t != T::one()) {
        return Err(Error::Validation("focal loss target must be binary".into()));
    }
    Ok(())
}

pub fn nfl_loss<T: Scalar>(logits: &Tensor<T>, target: &Tensor<T>, cfg: &LossConfig) -> Result<T> {
    nfl_loss_with_grad(logits, target, cfg).map(|(l, _)| l)
}

/// Loss and its gradient w.r.t. the logits.
pub fn nfl_loss_with_grad<T: Scalar>(logits: &Tensor<T>, target: &Tensor<T>, cfg: &LossConfig) -> Result<(T, Tensor<T>)> {
    check(logits, target)?;
    if cfg.gamma < 0.0 {
        return Err(Error::Config("focal gamma must be non-negative".into()));
    }
    let gamma = T::from_f64_lossy(cfg.gamma);
    let n = logits.len();
    // Per pixel: sign of the true class, weight, -ln p_t, 1 - p_t.
    let mut sign = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(n);
    let mut nll = Vec::with_capacity(n);
    let mut miss = Vec::with_capacity(n);
    let (mut num, mut den) = (T::zero(), T::from_f64_lossy(cfg.eps));
    for (&z, &t) in logits.data().iter().zip(target.data()) {
        let s = if t == T::one() { T::one() } else { -T::one() };
        let q = sigmoid(-s * z);
        let w = if cfg.gamma == 0.0 { T::one() } else { q.powf(gamma) };
        let l = softplus(-s * z);
        num += w * l;
        den += w;
        sign.push(s);
        weight.push(w);
        nll.push(l);
        miss.push(q);
    }
    let loss = num / den;
    let mut grad = Tensor::zeros(logits.shape().to_vec());
    for (i, g) in grad.data_mut().iter_mut().enumerate() {
        let (s, w, l, q) = (sign[i], weight[i], nll[i], miss[i]);
        let p = T::one() - q;
        let dl = -s * q;
        let dw = -gamma * s * p * w;
        *g = (w * dl + l * dw) / den - loss * dw / den;
    }
    if !loss.is_finite() {
        return Err(Error::Numeric { op: "nfl_loss" });
    }
    Ok((loss, grad))
}
