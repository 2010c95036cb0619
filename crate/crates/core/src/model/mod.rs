//! The toy segmentation network.
//!
//! An image is encoded once into a [`FeatureMap`]. Every interaction round
//! then re-encodes the prompts, fuses them with the cached features and
//! decodes a mask:
//!
//! ```text
//! clicks ─┬─ sparse slots ───────────────┐
//!         ├─ dense map ──► F + D ────────┼─► 3 × (order attn → object attn → FFN) ─► decoder ─► logits
//!         └─ order maps (depth) ─────────┘                ▲
//! previous mask ─► object masks ──────────────────────────┘
//! ```

mod checkpoint;
mod config;
mod decoder;
mod encoder;
mod fusion;
mod layers;
mod loss;
mod session;
mod train;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, train_or_load, Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Arm, LossConfig, ModelConfig};
pub use decoder::{decoder_backward, decoder_forward, mask_slots, pixel_shuffle, pixel_unshuffle, DecoderCache, DecoderParams};
pub use encoder::{encoder_backward, encoder_forward, patch_positions, EncoderCache, EncoderParams};
pub use fusion::{fuse_backward, fuse_forward, FusionBlockParams, FusionCache, FusionInputs};
pub use layers::{Linear, Mlp, Norm};
pub use loss::{nfl_loss, nfl_loss_with_grad};
pub use session::{RoundResult, Session, SessionSnapshot};
pub use train::{train, Adam, AdamConfig, StepInfo, TrainConfig, TrainReport, TrainState};

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::numerics::{Scalar, Tensor};
use crate::objectness::{build_object_stack, ObjectMaskStack, PreviousMask};
use crate::order::{assemble_order_stack, order_maps, DepthMap, OrderMaskStack, SigmaMode};
use crate::params::{Gradients, ParamStore};
use crate::prompts::{
    encode_dense, encode_dense_backward, encode_sparse, encode_sparse_backward, ClickSet, ImageSize, PromptParams, SlotKind,
};

/// Image features `[h × w × C]` computed once per image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T = f32> {
    pub values: Tensor<T>,
    pub image_size: ImageSize,
    /// Leading bytes of the SHA-256 of the image buffer.
    pub image_id: u64,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn grid(&self) -> (usize, usize) {
        (self.values.shape()[0], self.values.shape()[1])
    }
}

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub prompt: PromptParams,
    pub encoder: EncoderParams,
    pub fusion: Vec<FusionBlockParams>,
    pub decoder: DecoderParams,
}

impl ModelParams {
    fn register<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let encoder = EncoderParams::register(store, cfg, rng);
        let prompt = PromptParams::register(store, cfg.embed_dim, cfg.patch_size, rng);
        let fusion = (0..cfg.fusion_blocks)
            .map(|i| FusionBlockParams::register(store, i, cfg.embed_dim, cfg.ffn_hidden, rng))
            .collect();
        let decoder = DecoderParams::register(store, cfg, rng);
        Self { prompt, encoder, fusion, decoder }
    }
}

/// Per-round inputs besides the cached features.
#[derive(Clone, Copy)]
pub struct RoundInput<'a> {
    pub depth: &'a DepthMap,
    pub clicks: &'a ClickSet,
    pub previous: Option<&'a PreviousMask>,
}

/// Activations of one round, kept for the backward pass.
pub struct RoundCache<T> {
    clicks: ClickSet,
    size: ImageSize,
    occupancy: Vec<SlotKind>,
    order_stack: OrderMaskStack<T>,
    fusion: FusionCache<T>,
    decoder: decoder::DecoderCache<T>,
}

impl<T: Scalar> RoundCache<T> {
    pub fn fusion(&self) -> &FusionCache<T> {
        &self.fusion
    }

    pub fn order_stack(&self) -> &OrderMaskStack<T> {
        &self.order_stack
    }
}

/// Attention weights of the first order-attention layer with and without the
/// order penalty, both `[48 × hw]`.
#[derive(Clone, Debug)]
pub struct AttentionWeights<T> {
    pub before: Tensor<T>,
    pub after: Tensor<T>,
    pub grid: (usize, usize),
}

pub struct Model<T: Scalar = f32> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub params: ModelParams,
    encoder_calls: AtomicU64,
}

impl<T: Scalar> Clone for Model<T> {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            store: self.store.clone(),
            params: self.params.clone(),
            encoder_calls: AtomicU64::new(0),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Model<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("config", &self.config)
            .field("parameters", &self.store.scalar_count())
            .finish()
    }
}

impl<T: Scalar> Model<T> {
    /// Fresh model with the structural constants enforced.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self::build(config, seed))
    }

    /// Like [`Model::new`] but only checks internal consistency, for small
    /// test and gradient-check models.
    pub fn new_unchecked(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate_shape()?;
        Ok(Self::build(config, seed))
    }

    fn build(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let params = ModelParams::register(&mut store, &config, &mut rng);
        Self { config, store, params, encoder_calls: AtomicU64::new(0) }
    }

    /// Same weights in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            store: self.store.cast(),
            params: self.params.clone(),
            encoder_calls: AtomicU64::new(0),
        }
    }

    /// Number of times the image encoder has run on this instance.
    pub fn encoder_calls(&self) -> u64 {
        self.encoder_calls.load(Ordering::Relaxed)
    }

    fn image_dims(&self, image: &Tensor<f32>) -> Result<(usize, usize)> {
        match *image.shape() {
            [h, w, 3] if h % self.config.patch_size == 0 && w % self.config.patch_size == 0 && h > 0 && w > 0 => Ok((h, w)),
            [h, w, 3] => Err(Error::Dimension(format!(
                "{w}×{h} image is not divisible by patch size {}",
                self.config.patch_size
            ))),
            ref s => Err(Error::Dimension(format!("image must be [H, W, 3], got {s:?}"))),
        }
    }

    fn image_id(image: &Tensor<f32>) -> u64 {
        let mut hasher = Sha256::new();
        for v in image.data() {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn encode_image(&self, image: &Tensor<f32>) -> Result<FeatureMap<T>> {
        self.encode_image_with_cache(image).map(|(f, _)| f)
    }

    /// Encodes and keeps the activations for [`Model::encoder_backward`].
    pub fn encode_image_with_cache(&self, image: &Tensor<f32>) -> Result<(FeatureMap<T>, encoder::EncoderCache<T>)> {
        let (h, w) = self.image_dims(image)?;
        self.encoder_calls.fetch_add(1, Ordering::Relaxed);
        let (values, cache) = encoder::encoder_forward(&self.store, &self.params.encoder, &self.config, &image.cast())?;
        let features = FeatureMap { values, image_size: ImageSize::new(w, h), image_id: Self::image_id(image) };
        Ok((features, cache))
    }

    pub fn encoder_backward(&self, cache: &encoder::EncoderCache<T>, d_features: &Tensor<T>, grads: &mut Gradients<T>) -> Result<()> {
        encoder::encoder_backward(&self.store, &self.params.encoder, &self.config, cache, d_features, grads)
    }

    pub fn sigma_mode(&self) -> SigmaMode {
        if self.config.arm == Arm::NoOrder {
            SigmaMode::Fixed(0.0)
        } else {
            SigmaMode::Learned
        }
    }

    /// Effective σ of each fusion block.
    pub fn sigmas(&self) -> Vec<f64> {
        let mode = self.sigma_mode();
        self.params.fusion.iter().map(|b| b.order.sigma(&self.store, mode).as_f64()).collect()
    }

    fn check_round(&self, features: &FeatureMap<T>, input: &RoundInput<'_>) -> Result<()> {
        let size = features.image_size;
        if (input.depth.width(), input.depth.height()) != (size.width, size.height) {
            return Err(Error::Dimension(format!(
                "depth map {}×{} does not match image {}×{}",
                input.depth.width(),
                input.depth.height(),
                size.width,
                size.height
            )));
        }
        if let Some(p) = input.previous {
            if p.values.shape() != [size.height, size.width] {
                return Err(Error::Dimension("previous mask does not match the image".into()));
            }
        }
        input.clicks.check_bounds(size)
    }

    /// Order-mask stack at feature resolution.
    pub fn order_stack(&self, features: &FeatureMap<T>, input: &RoundInput<'_>) -> Result<OrderMaskStack<T>> {
        self.check_round(features, input)?;
        let (h, w) = features.grid();
        let (pos, negs) = order_maps(input.depth, input.clicks, self.config.order_normalization)?;
        assemble_order_stack(pos.as_ref(), &negs, &crate::prompts::slot_occupancy(input.clicks), h, w)
    }

    /// Object-mask stack, or `None` in the first round and in the `no_object` arm.
    pub fn object_stack(&self, features: &FeatureMap<T>, previous: Option<&PreviousMask>) -> Result<Option<ObjectMaskStack<T>>> {
        if self.config.arm == Arm::NoObject {
            return Ok(None);
        }
        let (h, w) = features.grid();
        previous.map(|p| build_object_stack(p, h, w)).transpose()
    }

    /// Fusion blocks that run in this arm; `no_sparse` has none, so the
    /// decoder sees the dense-augmented features and the non-point slots only.
    fn fusion_blocks(&self) -> &[FusionBlockParams] {
        if self.config.arm == Arm::NoSparse {
            &[]
        } else {
            &self.params.fusion
        }
    }

    fn sparse_slots(&self, clicks: &ClickSet, size: ImageSize) -> Result<(Tensor<T>, Vec<SlotKind>)> {
        let sparse = encode_sparse(clicks, &self.store, &self.params.prompt, size)?;
        let mut values = sparse.values;
        if self.config.arm == Arm::NoSparse {
            let np = self.store.get(self.params.prompt.non_point).data().to_vec();
            for r in 0..values.rows() {
                values.row_mut(r).copy_from_slice(&np);
            }
        }
        Ok((values, sparse.occupancy))
    }

    /// Runs one interaction round and returns logits `[H × W]`.
    pub fn forward_round(&self, features: &FeatureMap<T>, input: &RoundInput<'_>) -> Result<(Tensor<T>, RoundCache<T>)> {
        let order_stack = self.order_stack(features, input)?;
        let object_stack = self.object_stack(features, input.previous)?;
        let size = features.image_size;
        let (slots, occupancy) = self.sparse_slots(input.clicks, size)?;
        let dense = if self.config.arm == Arm::NoDense {
            None
        } else {
            let d = encode_dense(input.clicks, size, self.config.disk_radius, self.config.patch_size, &self.store, &self.params.prompt)?;
            Some(d.values)
        };
        let inputs = FusionInputs {
            features: &features.values,
            dense: dense.as_ref(),
            slots: &slots,
            order_stack: &order_stack,
            object_stack: object_stack.as_ref(),
            sigma: self.sigma_mode(),
        };
        let (s_final, fused, fusion) = fuse_forward(&self.store, self.fusion_blocks(), &inputs)?;
        let (logits, decoder) = decoder::decoder_forward(
            &self.store,
            &self.params.decoder,
            &self.config,
            &fused,
            &s_final,
            &occupancy,
            size.height,
            size.width,
        )?;
        let cache = RoundCache { clicks: input.clicks.clone(), size, occupancy, order_stack, fusion, decoder };
        Ok((logits, cache))
    }

    /// Accumulates parameter gradients for one round and returns the gradient
    /// w.r.t. the cached image features.
    pub fn backward_round(&self, cache: &RoundCache<T>, d_logits: &Tensor<T>, grads: &mut Gradients<T>) -> Result<Tensor<T>> {
        let (d_slots, d_fused) = decoder::decoder_backward(
            &self.store,
            &self.params.decoder,
            &self.config,
            &cache.decoder,
            cache.occupancy.len(),
            d_logits,
            grads,
        )?;
        let (d_slots0, d_fused) =
            fuse_backward(&self.store, self.fusion_blocks(), &cache.fusion, &cache.order_stack, &d_slots, d_fused, grads)?;
        if self.config.arm == Arm::NoSparse {
            encode_sparse_backward(&[SlotKind::NonPoint; crate::prompts::NUM_SLOTS], &d_slots0, &self.params.prompt, grads);
        } else {
            encode_sparse_backward(&cache.occupancy, &d_slots0, &self.params.prompt, grads);
        }
        if self.config.arm != Arm::NoDense {
            encode_dense_backward(
                &cache.clicks,
                cache.size,
                self.config.disk_radius,
                self.config.patch_size,
                &d_fused,
                &self.params.prompt,
                grads,
            )?;
        }
        Ok(d_fused)
    }

    pub fn predict_logits(&self, features: &FeatureMap<T>, input: &RoundInput<'_>) -> Result<Tensor<T>> {
        self.forward_round(features, input).map(|(l, _)| l)
    }

    pub fn predict(&self, features: &FeatureMap<T>, input: &RoundInput<'_>) -> Result<BinaryMask> {
        BinaryMask::from_logits(&self.predict_logits(features, input)?)
    }

    /// First-block order-attention weights with σ as configured and with σ = 0.
    pub fn attention_weights(&self, features: &FeatureMap<T>, input: &RoundInput<'_>) -> Result<AttentionWeights<T>> {
        let order_stack = self.order_stack(features, input)?;
        let (slots, _) = self.sparse_slots(input.clicks, features.image_size)?;
        let mut fused = features.values.clone();
        if self.config.arm != Arm::NoDense {
            let d = encode_dense(
                input.clicks,
                features.image_size,
                self.config.disk_radius,
                self.config.patch_size,
                &self.store,
                &self.params.prompt,
            )?;
            fused.add_assign(&d.values)?;
        }
        let block = &self.params.fusion[0].order;
        let run = |mode| {
            crate::order::order_attention_forward(&self.store, block, &slots, &fused, &order_stack, mode)
                .map(|(_, c)| c.probs().clone())
        };
        Ok(AttentionWeights { before: run(SigmaMode::Fixed(0.0))?, after: run(self.sigma_mode())?, grid: features.grid() })
    }
}
