use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Source taps for one output coordinate: `(i0, i1, w0, w1)`.
type Tap = (usize, usize, f64, f64);

fn axis_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = if i0 + 1 < input { i0 + 1 } else { i0 };
            let frac = src - i0 as f64;
            (i0, i1, 1.0 - frac, frac)
        })
        .collect()
}

fn spatial_dims<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [h, w] => Ok((h, w, 1)),
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::Dimension(format!("bilinear_resize: expected [H, W] or [H, W, C], got {s:?}"))),
    }
}

fn output_shape<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Vec<usize> {
    let mut shape = x.shape().to_vec();
    shape[0] = out_h;
    shape[1] = out_w;
    shape
}

/// Bilinear interpolation with half-pixel centers (`align_corners = false`).
///
/// Accepts `[H, W]` or `[H, W, C]`; equal sizes return an exact copy.
pub fn bilinear_resize<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (h, w, c) = spatial_dims(x)?;
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(Error::Dimension(format!("bilinear_resize: {h}×{w} -> {out_h}×{out_w}")));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let ty = axis_taps(h, out_h);
    let tx = axis_taps(w, out_w);
    let src = x.data();
    let mut out = Tensor::zeros(output_shape(x, out_h, out_w));
    let dst = out.data_mut();
    for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
        for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
            let taps = [
                (y0, x0, wy0 * wx0),
                (y0, x1, wy0 * wx1),
                (y1, x0, wy1 * wx0),
                (y1, x1, wy1 * wx1),
            ];
            let base = (oy * out_w + ox) * c;
            for ch in 0..c {
                let mut acc = 0.0f64;
                for &(sy, sx, wgt) in &taps {
                    acc += wgt * src[(sy * w + sx) * c + ch].as_f64();
                }
                dst[base + ch] = T::from_f64_lossy(acc);
            }
        }
    }
    out.ensure_finite("bilinear_resize")
}

/// Adjoint of [`bilinear_resize`]: maps an output gradient back onto the input grid.
pub fn bilinear_resize_backward<T: Scalar>(
    input_shape: &[usize],
    d_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let probe = Tensor::<T>::zeros(input_shape.to_vec());
    let (h, w, c) = spatial_dims(&probe)?;
    let (out_h, out_w, c2) = spatial_dims(d_out)?;
    if c != c2 {
        return Err(Error::Dimension("bilinear_resize_backward: channel mismatch".into()));
    }
    if (h, w) == (out_h, out_w) {
        return d_out.clone().reshape(input_shape.to_vec());
    }
    let ty = axis_taps(h, out_h);
    let tx = axis_taps(w, out_w);
    let mut acc = vec![0.0f64; h * w * c];
    let g = d_out.data();
    for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
        for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
            let taps = [
                (y0, x0, wy0 * wx0),
                (y0, x1, wy0 * wx1),
                (y1, x0, wy1 * wx0),
                (y1, x1, wy1 * wx1),
            ];
            let base = (oy * out_w + ox) * c;
            for ch in 0..c {
                let gv = g[base + ch].as_f64();
                for &(sy, sx, wgt) in &taps {
                    acc[(sy * w + sx) * c + ch] += wgt * gv;
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), acc.into_iter().map(T::from_f64_lossy).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct closed-form evaluation of one output pixel, independent of the tap tables.
    fn reference(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize, oy: usize, ox: usize) -> f64 {
        let sy = (((oy as f64 + 0.5) * h as f64 / out_h as f64) - 0.5).clamp(0.0, (h - 1) as f64);
        let sx = (((ox as f64 + 0.5) * w as f64 / out_w as f64) - 0.5).clamp(0.0, (w - 1) as f64);
        let mut v = 0.0;
        for y in 0..h {
            for x in 0..w {
                let ky = (1.0 - (sy - y as f64).abs()).max(0.0);
                let kx = (1.0 - (sx - x as f64).abs()).max(0.0);
                v += ky * kx * src[y * w + x];
            }
        }
        v
    }

    #[test]
    fn same_size_is_identity() {
        let x = Tensor::<f32>::new([2, 3, 2], (0..12).map(|v| v as f32 * 0.3).collect()).unwrap();
        assert_eq!(bilinear_resize(&x, 2, 3).unwrap(), x);
    }

    #[test]
    fn single_pixel_is_constant() {
        let x = Tensor::<f64>::from_f64([1, 1], &[2.5]).unwrap();
        let y = bilinear_resize(&x, 3, 4).unwrap();
        assert!(y.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn ramp_upsample_matches_reference() {
        let src = [0.0, 1.0, 2.0, 3.0];
        let x = Tensor::<f64>::from_f64([2, 2], &src).unwrap();
        let y = bilinear_resize(&x, 4, 4).unwrap();
        for oy in 0..4 {
            for ox in 0..4 {
                let want = reference(&src, 2, 2, 4, 4, oy, ox);
                assert!((y.data()[oy * 4 + ox] - want).abs() < 1e-12);
            }
        }
        // First row: 0, 0.25, 0.75, 1 along x.
        assert_eq!(&y.data()[..4], &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn zero_target_is_an_error() {
        let x = Tensor::<f32>::zeros([2, 2]);
        assert!(bilinear_resize(&x, 0, 2).is_err());
    }

    #[test]
    fn backward_is_adjoint() {
        // <resize(x), g> == <x, resize^T(g)>
        let x: Vec<f64> = (0..15).map(|v| (v as f64 * 0.37).sin()).collect();
        let g: Vec<f64> = (0..8).map(|v| (v as f64 * 1.3).cos()).collect();
        let xt = Tensor::<f64>::from_f64([5, 3], &x).unwrap();
        let gt = Tensor::<f64>::from_f64([2, 4], &g).unwrap();
        let y = bilinear_resize(&xt, 2, 4).unwrap();
        let lhs: f64 = y.data().iter().zip(&g).map(|(a, b)| a * b).sum();
        let back = bilinear_resize_backward(&[5, 3], &gt).unwrap();
        let rhs: f64 = back.data().iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
