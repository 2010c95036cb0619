//! Small building blocks shared by the encoder, fusion blocks and decoder.

use crate::error::Result;
use crate::numerics::{gelu, gelu_backward, gemm, layer_norm_backward, layer_norm_forward, LayerNormCache, Scalar, Tensor};
use crate::params::{Gradients, ParamId, ParamStore};

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl rand::Rng) -> Self {
        Self {
            weight: store.register_linear(&format!("{name}.weight"), fan_in, fan_out, rng),
            bias: store.register_full(&format!("{name}.bias"), vec![fan_out], 0.0),
        }
    }

    /// `x[n × in] · W + b`.
    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Tensor<T> {
        let w = store.get(self.weight);
        let b = store.get(self.bias);
        let mut y = Tensor::zeros([x.rows(), w.cols()]);
        for r in 0..x.rows() {
            y.row_mut(r).copy_from_slice(b.data());
        }
        gemm(T::one(), x.as_mat(), w.as_mat(), T::one(), y.as_mat_mut());
        y
    }

    /// Accumulates weight and bias gradients and returns `dx`.
    pub fn backward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>, dy: &Tensor<T>, grads: &mut Gradients<T>) -> Result<Tensor<T>> {
        let w = store.get(self.weight);
        let mut dw = Tensor::zeros(w.shape().to_vec());
        gemm(T::one(), x.as_mat().t(), dy.as_mat(), T::zero(), dw.as_mat_mut());
        grads.accumulate(self.weight, &dw)?;
        let mut db = vec![T::zero(); dy.cols()];
        for r in 0..dy.rows() {
            for (a, &g) in db.iter_mut().zip(dy.row(r)) {
                *a += g;
            }
        }
        grads.accumulate_slice(self.bias, &db);
        let mut dx = Tensor::zeros([x.rows(), x.cols()]);
        gemm(T::one(), dy.as_mat(), w.as_mat().t(), T::zero(), dx.as_mat_mut());
        Ok(dx)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        Self {
            gain: store.register_full(&format!("{name}.gain"), vec![dim], 1.0),
            bias: store.register_full(&format!("{name}.bias"), vec![dim], 0.0),
        }
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<(Tensor<T>, LayerNormCache<T>)> {
        layer_norm_forward(x, store.get(self.gain), store.get(self.bias))
    }

    pub fn backward<T: Scalar>(&self, store: &ParamStore<T>, cache: &LayerNormCache<T>, dy: &Tensor<T>, grads: &mut Gradients<T>) -> Result<Tensor<T>> {
        let (dx, dg, db) = layer_norm_backward(cache, store.get(self.gain), dy)?;
        grads.accumulate(self.gain, &dg)?;
        grads.accumulate(self.bias, &db)?;
        Ok(dx)
    }
}

/// Two-layer perceptron with a GELU in between.
#[derive(Clone, Copy, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

pub struct MlpCache<T> {
    input: Tensor<T>,
    pre: Tensor<T>,
    hidden: Tensor<T>,
}

impl Mlp {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, name: &str, dims: [usize; 3], rng: &mut impl rand::Rng) -> Self {
        Self {
            fc1: Linear::register(store, &format!("{name}.fc1"), dims[0], dims[1], rng),
            fc2: Linear::register(store, &format!("{name}.fc2"), dims[1], dims[2], rng),
        }
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> (Tensor<T>, MlpCache<T>) {
        let pre = self.fc1.forward(store, x);
        let hidden = gelu(&pre);
        let out = self.fc2.forward(store, &hidden);
        (out, MlpCache { input: x.clone(), pre, hidden })
    }

    pub fn backward<T: Scalar>(&self, store: &ParamStore<T>, cache: &MlpCache<T>, dy: &Tensor<T>, grads: &mut Gradients<T>) -> Result<Tensor<T>> {
        let dh = self.fc2.backward(store, &cache.hidden, dy, grads)?;
        let dpre = gelu_backward(&cache.pre, &dh)?;
        self.fc1.backward(store, &cache.input, &dpre, grads)
    }
}
