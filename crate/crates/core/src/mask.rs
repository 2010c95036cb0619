//! Binary masks at image resolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};
use crate::objectness::PreviousMask;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!("{width}×{height} mask with {} values", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self { width, height, data }
    }

    /// Pixels where the logit is strictly positive.
    pub fn from_logits<T: Scalar>(logits: &Tensor<T>) -> Result<Self> {
        match *logits.shape() {
            [h, w] => Ok(Self { width: w, height: h, data: logits.data().iter().map(|&z| z > T::zero()).collect() }),
            ref s => Err(Error::Dimension(format!("logits must be [H, W], got {s:?}"))),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    fn check_same_size(&self, other: &Self) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Dimension(format!(
                "mask sizes differ: {}×{} vs {}×{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        self.check_same_size(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a != b).collect();
        Ok(Self { width: self.width, height: self.height, data })
    }

    /// `|a ∩ b| / |a ∪ b|`, and 1 when both are empty.
    pub fn iou(&self, other: &Self) -> Result<f64> {
        self.check_same_size(other)?;
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
        Tensor::new([self.height, self.width], data).expect("mask size")
    }

    pub fn to_previous(&self, round: usize) -> PreviousMask {
        PreviousMask::new(self.to_tensor(), round).expect("binary by construction")
    }

    /// Run lengths in row-major order, alternating background and foreground
    /// and always starting with a (possibly zero) background run.
    pub fn to_rle(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &v in &self.data {
            if v != current {
                runs.push(len);
                current = v;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        runs
    }

    pub fn from_rle(width: usize, height: usize, runs: &[u32]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for (i, &r) in runs.iter().enumerate() {
            data.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
        }
        if data.len() != width * height {
            return Err(Error::Format(format!("RLE covers {} pixels, expected {}", data.len(), width * height)));
        }
        Ok(Self { width, height, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iou_identities() {
        let a = BinaryMask::new(3, 1, vec![true, true, false]).unwrap();
        let b = BinaryMask::new(3, 1, vec![false, true, true]).unwrap();
        assert_eq!(a.iou(&b).unwrap(), 1.0 / 3.0);
        assert_eq!(a.iou(&a).unwrap(), 1.0);
        let c = BinaryMask::new(3, 1, vec![false, false, true]).unwrap();
        let d = BinaryMask::new(3, 1, vec![true, false, false]).unwrap();
        assert_eq!(c.iou(&d).unwrap(), 0.0);
        assert_eq!(BinaryMask::empty(2, 2).iou(&BinaryMask::empty(2, 2)).unwrap(), 1.0);
    }

    #[test]
    fn rle_starts_with_background() {
        let m = BinaryMask::new(4, 1, vec![true, true, false, true]).unwrap();
        assert_eq!(m.to_rle(), vec![0, 2, 1, 1]);
    }

    proptest! {
        #[test]
        fn rle_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let m = BinaryMask::from_fn(w, h, |x, y| (seed >> ((x * 7 + y * 3) % 64)) & 1 == 1);
            prop_assert_eq!(BinaryMask::from_rle(w, h, &m.to_rle()).unwrap(), m);
        }
    }
}
