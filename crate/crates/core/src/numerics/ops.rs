use super::{gemm, Scalar, Tensor};
use crate::error::{Error, Result};

fn check_matrix<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::Dimension(format!("{what}: expected a matrix, got shape {s:?}"))),
    }
}

/// `a[m×k] · b[k×n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = check_matrix(a, "matmul lhs")?;
    let (k2, n) = check_matrix(b, "matmul rhs")?;
    if k != k2 {
        return Err(Error::Dimension(format!("matmul: [{m}×{k}] · [{k2}×{n}]")));
    }
    let mut out = Tensor::zeros([m, n]);
    gemm(T::one(), a.as_mat(), b.as_mat(), T::zero(), out.as_mat_mut());
    out.ensure_finite("matmul")
}

/// Gradients of `matmul` w.r.t. both inputs given the output gradient.
pub fn matmul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (m, k) = check_matrix(a, "matmul lhs")?;
    let (_, n) = check_matrix(b, "matmul rhs")?;
    if d_out.shape() != [m, n] {
        return Err(Error::Dimension(format!(
            "matmul_backward: output gradient {:?}, expected [{m}, {n}]",
            d_out.shape()
        )));
    }
    let mut da = Tensor::zeros([m, k]);
    let mut db = Tensor::zeros([k, n]);
    gemm(T::one(), d_out.as_mat(), b.as_mat().t(), T::zero(), da.as_mat_mut());
    gemm(T::one(), a.as_mat().t(), d_out.as_mat(), T::zero(), db.as_mat_mut());
    Ok((da, db))
}

/// Row-wise softmax of `logits + additive_mask`.
///
/// A row whose entries are all `-inf` after masking yields all zeros, which
/// callers read as "nothing to attend to".
pub fn masked_softmax<T: Scalar>(logits: &Tensor<T>, additive_mask: &Tensor<T>) -> Result<Tensor<T>> {
    logits.check_same_shape(additive_mask, "masked_softmax")?;
    if logits.data().iter().chain(additive_mask.data()).any(|v| v.is_nan()) {
        return Err(Error::Numeric { op: "masked_softmax" });
    }
    if additive_mask.data().iter().any(|&v| v == T::infinity()) {
        return Err(Error::Numeric { op: "masked_softmax" });
    }
    let mut out = logits.add(additive_mask)?;
    softmax_rows_in_place(&mut out);
    out.ensure_finite("masked_softmax")
}

pub(crate) fn softmax_rows_in_place<T: Scalar>(x: &mut Tensor<T>) {
    let cols = x.cols();
    if cols == 0 {
        return;
    }
    for row in x.data_mut().chunks_mut(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            row.iter_mut().for_each(|v| *v = T::zero());
            continue;
        }
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = T::one() / sum;
        row.iter_mut().for_each(|v| *v *= inv);
    }
}

/// Gradient of the softmax input given the softmax output `probs`.
pub fn masked_softmax_backward<T: Scalar>(probs: &Tensor<T>, d_probs: &Tensor<T>) -> Result<Tensor<T>> {
    probs.check_same_shape(d_probs, "masked_softmax_backward")?;
    let cols = probs.cols();
    let mut out = Tensor::zeros(probs.shape().to_vec());
    if cols == 0 {
        return Ok(out);
    }
    for ((p, dp), dz) in probs
        .data()
        .chunks(cols)
        .zip(d_probs.data().chunks(cols))
        .zip(out.data_mut().chunks_mut(cols))
    {
        let dot: T = p.iter().zip(dp).map(|(&a, &b)| a * b).sum();
        for ((z, &pi), &dpi) in dz.iter_mut().zip(p).zip(dp) {
            *z = pi * (dpi - dot);
        }
    }
    Ok(out)
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Saved activations for [`layer_norm_backward`].
#[derive(Clone, Debug)]
pub struct LayerNormCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> LayerNormCache<T> {
    pub fn normalized(&self) -> &Tensor<T> {
        &self.normalized
    }
}

/// Normalizes each row over the last dimension, then applies `gain` and `bias`.
pub fn layer_norm<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    layer_norm_forward(x, gain, bias).map(|(y, _)| y)
}

pub fn layer_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, LayerNormCache<T>)> {
    let c = x.cols();
    if gain.len() != c || bias.len() != c {
        return Err(Error::Dimension(format!(
            "layer_norm: last dim {c}, gain {:?}, bias {:?}",
            gain.shape(),
            bias.shape()
        )));
    }
    let eps = T::from_f64_lossy(LAYER_NORM_EPS);
    let inv_c = T::one() / T::from_usize(c.max(1)).unwrap();
    let mut normalized = Tensor::zeros(x.shape().to_vec());
    let mut y = Tensor::zeros(x.shape().to_vec());
    let mut inv_std = Vec::with_capacity(x.rows());
    for ((row, nrow), yrow) in x
        .data()
        .chunks(c)
        .zip(normalized.data_mut().chunks_mut(c))
        .zip(y.data_mut().chunks_mut(c))
    {
        let mean = row.iter().copied().sum::<T>() * inv_c;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_c;
        let istd = T::one() / (var + eps).sqrt();
        inv_std.push(istd);
        for (j, (&v, n)) in row.iter().zip(nrow.iter_mut()).enumerate() {
            *n = (v - mean) * istd;
            yrow[j] = *n * gain.data()[j] + bias.data()[j];
        }
    }
    let y = y.ensure_finite("layer_norm")?;
    Ok((y, LayerNormCache { normalized, inv_std }))
}

/// Returns `(dx, d_gain, d_bias)`.
pub fn layer_norm_backward<T: Scalar>(
    cache: &LayerNormCache<T>,
    gain: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    cache.normalized.check_same_shape(dy, "layer_norm_backward")?;
    let c = dy.cols();
    let inv_c = T::one() / T::from_usize(c.max(1)).unwrap();
    let mut dx = Tensor::zeros(dy.shape().to_vec());
    let mut dgain = Tensor::zeros([c]);
    let mut dbias = Tensor::zeros([c]);
    let mut dxhat = vec![T::zero(); c];
    for (r, ((xh, dyr), dxr)) in cache
        .normalized
        .data()
        .chunks(c)
        .zip(dy.data().chunks(c))
        .zip(dx.data_mut().chunks_mut(c))
        .enumerate()
    {
        let mut mean_d = T::zero();
        let mut mean_dx = T::zero();
        for j in 0..c {
            dgain.data_mut()[j] += dyr[j] * xh[j];
            dbias.data_mut()[j] += dyr[j];
            dxhat[j] = dyr[j] * gain.data()[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xh[j];
        }
        mean_d *= inv_c;
        mean_dx *= inv_c;
        let istd = cache.inv_std[r];
        for j in 0..c {
            dxr[j] = istd * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    Ok((dx, dgain, dbias))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-approximated GELU.
pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let c = T::from_f64_lossy(GELU_C);
    let a = T::from_f64_lossy(GELU_A);
    let half = T::from_f64_lossy(0.5);
    x.map(|v| half * v * (T::one() + (c * (v + a * v * v * v)).tanh()))
}

/// Gradient of [`gelu`] at pre-activation `x`.
pub fn gelu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    x.check_same_shape(dy, "gelu_backward")?;
    let c = T::from_f64_lossy(GELU_C);
    let a = T::from_f64_lossy(GELU_A);
    let half = T::from_f64_lossy(0.5);
    let three = T::from_f64_lossy(3.0);
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| {
            let u = c * (v + a * v * v * v);
            let t = u.tanh();
            let du = c * (T::one() + three * a * v * v);
            let d = half * (T::one() + t) + half * v * (T::one() - t * t) * du;
            g * d
        })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)`, stable for large `|x|`.
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::from_f64_lossy(30.0) {
        x
    } else if x < T::from_f64_lossy(-30.0) {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    assert!(y > 0.0, "softplus inverse needs a positive value");
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let a = t(&[3, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        assert_eq!(matmul(&Tensor::identity(3), &a).unwrap(), a);
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 1], &[1.0, 1.0]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[3.0, 7.0]);
        let z = Tensor::<f64>::zeros([2, 2]);
        assert!(matmul(&z, &b).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::<f32>::zeros([2, 3]);
        assert!(matches!(matmul(&a, &a), Err(Error::Dimension(_))));
    }

    #[test]
    fn softmax_plain_and_forced() {
        let logits = t(&[1, 3], &[1.0, 2.0, 3.0]);
        let p = masked_softmax(&logits, &Tensor::zeros([1, 3])).unwrap();
        // Independent exp/sum evaluation.
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        for (got, want) in p.data().iter().zip(e.iter().map(|v| v / s)) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }
        let p = masked_softmax(&t(&[1, 2], &[0.0, 0.0]), &t(&[1, 2], &[0.0, f64::NEG_INFINITY])).unwrap();
        assert_eq!(p.data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_all_masked_row_is_zero() {
        let m = t(&[2, 2], &[f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, 0.0]);
        let p = masked_softmax(&Tensor::zeros([2, 2]), &m).unwrap();
        assert_eq!(p.data(), &[0.0, 0.0, 0.5, 0.5]);
        let g = masked_softmax_backward(&p, &t(&[2, 2], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(&g.data()[..2], &[0.0, 0.0]);
    }

    #[test]
    fn softmax_rejects_nan() {
        let l = t(&[1, 2], &[f64::NAN, 0.0]);
        assert!(matches!(
            masked_softmax(&l, &Tensor::zeros([1, 2])),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn layer_norm_cases() {
        let g = t(&[2], &[1.0, 1.0]);
        let b = t(&[2], &[0.0, 0.0]);
        let y = layer_norm(&t(&[1, 2], &[1.0, -1.0]), &g, &b).unwrap();
        // var = 1, so the output is [1, -1] / sqrt(1 + 1e-5).
        let s = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert_relative_eq!(y.data()[0], s, max_relative = 1e-12);
        assert_relative_eq!(y.data()[1], -s, max_relative = 1e-12);

        let bias = t(&[3], &[0.5, -2.0, 7.0]);
        let y = layer_norm(&t(&[1, 3], &[4.0, 4.0, 4.0]), &t(&[3], &[3.0, 3.0, 3.0]), &bias).unwrap();
        assert_eq!(y.data(), bias.data());
    }

    #[test]
    fn softplus_round_trip() {
        for y in [1e-3, 0.5, 1.0, 4.0, 50.0] {
            assert_relative_eq!(softplus(softplus_inverse(y)), y, max_relative = 1e-10);
        }
    }
}
