//! Shared helpers for the integration suites: central-difference gradient
//! checks in `f64` for every trainable op.

#![allow(dead_code)]

use orderseg::model::{
    decoder_backward, decoder_forward, encoder_backward, encoder_forward, nfl_loss, nfl_loss_with_grad, DecoderParams,
    EncoderParams, LossConfig, Model, ModelConfig, RoundInput,
};
use orderseg::numerics::Tensor;
use orderseg::objectness::{object_attention_backward, object_attention_forward, ObjectAttentionParams, ObjectMaskStack};
use orderseg::order::{order_attention_backward, order_attention_forward, DepthMap, DepthProvenance, OrderAttentionParams, OrderMaskStack, SigmaMode};
use orderseg::params::{Gradients, ParamStore};
use orderseg::prompts::{Click, ClickSet, SlotKind, NUM_SLOTS};
use orderseg::mask::BinaryMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| { let z: f64 = StandardNormal.sample(rng); scale * z }).collect::<Vec<f64>>();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn sample_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|i| i * len / max + (i * 7) % (len / max).max(1)).collect()
    }
}

/// Max relative error between `grads` and central differences of `f` over
/// (a sample of) every parameter entry.
pub fn check_params(store: &mut ParamStore<f64>, grads: &Gradients<f64>, per_tensor: usize, f: &mut dyn FnMut(&ParamStore<f64>) -> f64) -> f64 {
    let ids: Vec<_> = store.ids().collect();
    let mut worst = 0.0f64;
    for id in ids {
        for j in sample_indices(store.get(id).len(), per_tensor) {
            let orig = store.get(id).data()[j];
            store.get_mut(id).data_mut()[j] = orig + STEP;
            let up = f(store);
            store.get_mut(id).data_mut()[j] = orig - STEP;
            let down = f(store);
            store.get_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(grads.get(id).data()[j], numeric));
        }
    }
    worst
}

/// Same for an input tensor.
pub fn check_input(x: &Tensor<f64>, analytic: &Tensor<f64>, f: &dyn Fn(&Tensor<f64>) -> f64) -> f64 {
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for j in 0..x.len() {
        let orig = x.data()[j];
        probe.data_mut()[j] = orig + STEP;
        let up = f(&probe);
        probe.data_mut()[j] = orig - STEP;
        let down = f(&probe);
        probe.data_mut()[j] = orig;
        worst = worst.max(rel_err(analytic.data()[j], (up - down) / (2.0 * STEP)));
    }
    worst
}

pub fn order_attention_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, l, c) = (5, 9, 8);
    let mut store = ParamStore::new();
    let p = OrderAttentionParams::register(&mut store, "order", c, &mut rng);
    store.get_mut(p.sigma_raw).data_mut()[0] = 0.7;
    let slots = randn(&mut rng, &[n, c], 1.0);
    let feats = randn(&mut rng, &[l, c], 1.0);
    let stack = OrderMaskStack { values: Tensor::new([n, l], (0..n * l).map(|_| rng.random::<f64>()).collect()).unwrap() };
    let r = randn(&mut rng, &[n, c], 1.0);
    let mode = SigmaMode::Learned;
    let loss = |st: &ParamStore<f64>, s: &Tensor<f64>, f: &Tensor<f64>| {
        dot(&order_attention_forward(st, &p, s, f, &stack, mode).unwrap().0, &r)
    };
    let (_, cache) = order_attention_forward(&store, &p, &slots, &feats, &stack, mode).unwrap();
    let mut grads = Gradients::zeros_like(&store);
    let (ds, df) = order_attention_backward(&store, &p, &cache, &stack, &r, &mut grads).unwrap();
    let e_in = check_input(&slots, &ds, &|s| loss(&store, s, &feats)).max(check_input(&feats, &df, &|f| loss(&store, &slots, f)));
    let e_p = check_params(&mut store, &grads, usize::MAX, &mut |st| loss(st, &slots, &feats));
    e_in.max(e_p)
}

pub fn object_attention_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (n, l, c) = (6, 9, 8);
    let mut store = ParamStore::new();
    let p = ObjectAttentionParams::register(&mut store, "object", c, &mut rng);
    let slots = randn(&mut rng, &[n, c], 1.0);
    let feats = randn(&mut rng, &[l, c], 1.0);
    // Alternate foreground pattern; one row fully blocked.
    let values = (0..n * l)
        .map(|i| {
            let (row, col) = (i / l, i % l);
            if row == n - 1 || (row + col) % 3 == 0 { f64::NEG_INFINITY } else { 0.0 }
        })
        .collect();
    let stack = ObjectMaskStack { values: Tensor::new([n, l], values).unwrap() };
    let r = randn(&mut rng, &[n, c], 1.0);
    let loss = |st: &ParamStore<f64>, s: &Tensor<f64>, f: &Tensor<f64>| {
        dot(&object_attention_forward(st, &p, s, f, Some(&stack)).unwrap().0, &r)
    };
    let (_, cache) = object_attention_forward(&store, &p, &slots, &feats, Some(&stack)).unwrap();
    let mut grads = Gradients::zeros_like(&store);
    let (ds, df) = object_attention_backward(&store, &p, &cache, &r, &mut grads).unwrap();
    let e_in = check_input(&slots, &ds, &|s| loss(&store, s, &feats)).max(check_input(&feats, &df, &|f| loss(&store, &slots, f)));
    e_in.max(check_params(&mut store, &grads, usize::MAX, &mut |st| loss(st, &slots, &feats)))
}

pub fn encoder_block_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = ModelConfig { encoder_blocks: 1, ..ModelConfig::tiny() };
    let mut store = ParamStore::new();
    let p = EncoderParams::register(&mut store, &cfg, &mut rng);
    let image = Tensor::new([8, 8, 3], (0..192).map(|_| rng.random::<f64>()).collect()).unwrap();
    let (out, cache) = encoder_forward(&store, &p, &cfg, &image).unwrap();
    let r = randn(&mut rng, out.shape(), 1.0);
    let mut grads = Gradients::zeros_like(&store);
    encoder_backward(&store, &p, &cfg, &cache, &r, &mut grads).unwrap();
    check_params(&mut store, &grads, usize::MAX, &mut |st| dot(&encoder_forward(st, &p, &cfg, &image).unwrap().0, &r))
}

pub fn decoder_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = ModelConfig::tiny();
    let c = cfg.embed_dim;
    let mut store = ParamStore::new();
    let p = DecoderParams::register(&mut store, &cfg, &mut rng);
    let fused = randn(&mut rng, &[2, 2, c], 1.0);
    let slots = randn(&mut rng, &[NUM_SLOTS, c], 1.0);
    let mut occ = vec![SlotKind::NonPoint; NUM_SLOTS];
    occ[0] = SlotKind::Positive;
    occ[1] = SlotKind::Positive;
    occ[24] = SlotKind::Negative;
    let (out, cache) = decoder_forward(&store, &p, &cfg, &fused, &slots, &occ, 8, 8).unwrap();
    let r = randn(&mut rng, out.shape(), 1.0);
    let mut grads = Gradients::zeros_like(&store);
    let (ds, df) = decoder_backward(&store, &p, &cfg, &cache, NUM_SLOTS, &r, &mut grads).unwrap();
    let loss = |st: &ParamStore<f64>, f: &Tensor<f64>, s: &Tensor<f64>| {
        dot(&decoder_forward(st, &p, &cfg, f, s, &occ, 8, 8).unwrap().0, &r)
    };
    let e_in = check_input(&fused, &df, &|f| loss(&store, f, &slots)).max(check_input(&slots, &ds, &|s| loss(&store, &fused, s)));
    e_in.max(check_params(&mut store, &grads, usize::MAX, &mut |st| loss(st, &fused, &slots)))
}

pub fn nfl_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let logits = randn(&mut rng, &[8, 8], 2.0);
    let target = Tensor::new([8, 8], (0..64).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect()).unwrap();
    let cfg = LossConfig::default();
    let (_, g) = nfl_loss_with_grad(&logits, &target, &cfg).unwrap();
    check_input(&logits, &g, &|z| nfl_loss(z, &target, &cfg).unwrap())
}

/// Whole tiny model, one round with clicks, depth and a previous mask.
pub fn end_to_end_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut model = Model::<f64>::new_unchecked(ModelConfig::tiny(), 5).unwrap();
    let image = Tensor::<f32>::new([16, 16, 3], (0..768).map(|_| rng.random::<f32>()).collect()).unwrap();
    let depth = DepthMap::new(
        Tensor::new([16, 16], (0..256).map(|i| ((i % 16) / 4) as f32 + 1.0).collect()).unwrap(),
        DepthProvenance::SyntheticGroundTruth,
    )
    .unwrap();
    let mut clicks = ClickSet::new();
    clicks.push(Click::positive(3, 4, 0)).unwrap();
    clicks.push(Click::negative(12, 9, 1)).unwrap();
    let prev = BinaryMask::from_fn(16, 16, |x, y| x < 9 && y < 11).to_previous(0);
    let gt = BinaryMask::from_fn(16, 16, |x, y| x < 7 && y < 12).to_tensor::<f64>();
    let cfg = LossConfig::default();
    let input = RoundInput { depth: &depth, clicks: &clicks, previous: Some(&prev) };
    let loss = |m: &Model<f64>| {
        let f = m.encode_image(&image).unwrap();
        nfl_loss(&m.predict_logits(&f, &input).unwrap(), &gt, &cfg).unwrap()
    };
    let (features, enc) = model.encode_image_with_cache(&image).unwrap();
    let (logits, cache) = model.forward_round(&features, &input).unwrap();
    let (_, dl) = nfl_loss_with_grad(&logits, &gt, &cfg).unwrap();
    let mut grads = Gradients::zeros_like(&model.store);
    let df = model.backward_round(&cache, &dl, &mut grads).unwrap();
    model.encoder_backward(&enc, &df, &mut grads).unwrap();
    let mut store = model.store.clone();
    check_params(&mut store, &grads, 6, &mut |st| {
        model.store = st.clone();
        loss(&model)
    })
}
