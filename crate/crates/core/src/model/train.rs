//! Training loop with Adam and iterative click simulation.
//!
//! Each sample picks one instance of a scene, encodes the image once, plays
//! 0 to 3 rounds without gradients to build up clicks and a previous mask,
//! then trains on one more round.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::params::{Gradients, ParamStore};
use crate::prompts::ClickSet;
use crate::scenegen::Scene;
use crate::simharness::sample_train_clicks;

use super::{nfl_loss_with_grad, LossConfig, Model, RoundInput};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moments are kept in `f32` like the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(store: &ParamStore<f32>, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|(_, t)| Tensor::zeros(t.shape().to_vec())).collect::<Vec<_>>();
        Self { config, t: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, store: &mut ParamStore<f32>, grads: &Gradients<f32>) {
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (id, g) in grads.iter() {
            let i = id.index();
            let p = store.get_mut(id).data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j] as f64;
                let mj = c.beta1 * m[j] as f64 + (1.0 - c.beta1) * gj;
                let vj = c.beta2 * v[j] as f64 + (1.0 - c.beta2) * gj * gj;
                m[j] = mj as f32;
                v[j] = vj as f32;
                let update = c.lr * (mj / bc1) / ((vj / bc2).sqrt() + c.eps);
                p[j] = (p[j] as f64 - update) as f32;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    /// Upper bound on the gradient-free rounds played before the trained one.
    pub max_warmup_rounds: usize,
    pub seed: u64,
    /// Stop after this many optimizer steps in total, if set.
    pub max_steps: Option<u64>,
    pub adam: AdamConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 8,
            max_warmup_rounds: 3,
            seed: 0,
            max_steps: None,
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

/// Everything needed to resume training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub epoch: u64,
    /// Position inside the current epoch's permutation.
    pub next_index: usize,
    pub adam: Adam,
}

impl TrainState {
    pub fn new(model: &Model<f32>, adam: AdamConfig) -> Self {
        Self { step: 0, epoch: 0, next_index: 0, adam: Adam::new(&model.store, adam) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: u64,
    /// Mean batch loss of every step taken in this call.
    pub step_losses: Vec<f64>,
    /// Mean loss of each epoch finished in this call.
    pub epoch_losses: Vec<f64>,
}

/// Progress passed to the per-step callback.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub step: u64,
    pub epoch: u64,
    pub loss: f64,
}

fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_e90c);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn sample_rng(seed: u64, epoch: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((epoch << 32) | index as u64);
    rng
}

/// Plays the warm-up rounds and one trained round; returns the loss.
fn train_sample(model: &Model<f32>, scene: &Scene, cfg: &TrainConfig, rng: &mut ChaCha8Rng, grads: &mut Gradients<f32>) -> Result<f64> {
    let k = rng.random_range(0..scene.masks.len());
    let gt = &scene.masks[k];
    let (features, enc_cache) = model.encode_image_with_cache(&scene.image)?;
    let warmup = rng.random_range(0..=cfg.max_warmup_rounds);
    let mut clicks = ClickSet::new();
    let mut pred = None;
    for round in 0..=warmup {
        let click = match sample_train_clicks(gt, pred.as_ref(), round, rng) {
            Ok(c) => c,
            // Already perfect: train on the current state.
            Err(Error::NoError) => break,
            Err(e) => return Err(e),
        };
        if clicks.push(click).is_err() {
            break;
        }
        if round == warmup {
            break;
        }
        let previous = pred.as_ref().map(|p: &crate::mask::BinaryMask| p.to_previous(round.saturating_sub(1)));
        let input = RoundInput { depth: &scene.depth, clicks: &clicks, previous: previous.as_ref() };
        pred = Some(model.predict(&features, &input)?);
    }
    let previous = pred.as_ref().map(|p| p.to_previous(clicks.len().saturating_sub(2)));
    let input = RoundInput { depth: &scene.depth, clicks: &clicks, previous: previous.as_ref() };
    let (logits, cache) = model.forward_round(&features, &input)?;
    let (loss, d_logits) = nfl_loss_with_grad(&logits, &gt.to_tensor(), &cfg.loss)?;
    let d_features = model.backward_round(&cache, &d_logits, grads)?;
    model.encoder_backward(&enc_cache, &d_features, grads)?;
    Ok(loss as f64)
}

/// Trains `model` in place from `state`, calling `on_step` after every
/// optimizer step. Returns the state to resume from.
pub fn train(
    model: &mut Model<f32>,
    scenes: &[Scene],
    cfg: &TrainConfig,
    mut state: TrainState,
    mut on_step: impl FnMut(&StepInfo, &Model<f32>, &TrainState) -> Result<()>,
) -> Result<(TrainReport, TrainState)> {
    if scenes.is_empty() {
        return Err(Error::Dataset("no training scenes".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if state.adam.m.len() != model.store.len() {
        return Err(Error::Config("optimizer state does not match the model".into()));
    }
    let mut report = TrainReport::default();
    let n = scenes.len();
    while state.epoch < cfg.epochs {
        let order = epoch_order(cfg.seed, state.epoch, n);
        let mut epoch_sum = 0.0;
        let mut epoch_count = 0usize;
        while state.next_index < n {
            if cfg.max_steps.is_some_and(|m| state.step >= m) {
                return Ok((report, state));
            }
            let end = (state.next_index + cfg.batch_size).min(n);
            let mut grads = Gradients::zeros_like(&model.store);
            let mut batch_loss = 0.0;
            for &idx in &order[state.next_index..end] {
                let mut rng = sample_rng(cfg.seed, state.epoch, idx);
                batch_loss += train_sample(model, &scenes[idx], cfg, &mut rng, &mut grads)?;
            }
            let count = end - state.next_index;
            grads.scale(1.0 / count as f32);
            batch_loss /= count as f64;
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence { step: state.step });
            }
            state.adam.step(&mut model.store, &grads);
            state.step += 1;
            state.next_index = end;
            epoch_sum += batch_loss * count as f64;
            epoch_count += count;
            report.steps += 1;
            report.step_losses.push(batch_loss);
            on_step(&StepInfo { step: state.step, epoch: state.epoch, loss: batch_loss }, model, &state)?;
        }
        if epoch_count > 0 {
            report.epoch_losses.push(epoch_sum / epoch_count as f64);
        }
        state.epoch += 1;
        state.next_index = 0;
    }
    Ok((report, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::scenegen::{generate_dataset, DatasetSpec, SplitRatios};

    fn tiny_setup() -> (Model<f32>, Vec<Scene>) {
        let cfg = ModelConfig { input_size: 32, ..ModelConfig::tiny() };
        let model = Model::new_unchecked(cfg, 3).unwrap();
        let spec = DatasetSpec { seed: 1, count: 6, size: 32, splits: SplitRatios::default() };
        (model, generate_dataset(&spec).unwrap())
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::<f32>::new();
        let id = store.register("w", Tensor::new([2], vec![1.0, -1.0]).unwrap());
        let mut grads = Gradients::zeros_like(&store);
        grads.accumulate_slice(id, &[0.5, -2.0]);
        let mut adam = Adam::new(&store, AdamConfig { lr: 0.1, ..Default::default() });
        adam.step(&mut store, &grads);
        let w = store.get(id).data();
        assert!((w[0] - 0.9).abs() < 1e-6 && (w[1] + 0.9).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (model, scenes) = tiny_setup();
        let cfg = TrainConfig { epochs: 2, batch_size: 4, seed: 9, ..Default::default() };
        let mut a = model.clone();
        let start = TrainState::new(&a, cfg.adam);
        let (_, sa) = train(&mut a, &scenes, &cfg, start, |_, _, _| Ok(())).unwrap();

        let mut b = model.clone();
        let partial = TrainConfig { max_steps: Some(3), ..cfg.clone() };
        let start = TrainState::new(&b, cfg.adam);
        let (_, mid) = train(&mut b, &scenes, &partial, start, |_, _, _| Ok(())).unwrap();
        assert_eq!(mid.step, 3);
        let (_, sb) = train(&mut b, &scenes, &cfg, mid, |_, _, _| Ok(())).unwrap();
        assert_eq!(sa, sb);
        for ((_, x), (_, y)) in a.store.iter().zip(b.store.iter()) {
            assert_eq!(x, y);
        }
    }
}
