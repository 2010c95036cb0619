use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{Model, RoundInput};
use crate::numerics::Tensor;
use crate::order::DepthMap;
use crate::prompts::{Click, ClickSet};

use super::clicks::next_click;
use super::metrics::{InteractionTrace, MAX_CLICKS};

/// Anything that can be driven by the simulated user.
pub trait Segmenter {
    type Features;

    fn encode(&self, image: &Tensor<f32>) -> Result<Self::Features>;

    fn segment(
        &self,
        features: &Self::Features,
        depth: &DepthMap,
        clicks: &ClickSet,
        previous: Option<&BinaryMask>,
    ) -> Result<BinaryMask>;
}

impl Segmenter for Model<f32> {
    type Features = crate::model::FeatureMap<f32>;

    fn encode(&self, image: &Tensor<f32>) -> Result<Self::Features> {
        self.encode_image(image)
    }

    fn segment(&self, features: &Self::Features, depth: &DepthMap, clicks: &ClickSet, previous: Option<&BinaryMask>) -> Result<BinaryMask> {
        let round = clicks.len().saturating_sub(1);
        let prev = previous.map(|m| m.to_previous(round));
        self.predict(features, &RoundInput { depth, clicks, previous: prev.as_ref() })
    }
}

/// Returns the ground truth it was built with.
pub struct OracleSegmenter(pub BinaryMask);

impl Segmenter for OracleSegmenter {
    type Features = ();

    fn encode(&self, _: &Tensor<f32>) -> Result<()> {
        Ok(())
    }

    fn segment(&self, _: &(), _: &DepthMap, _: &ClickSet, _: Option<&BinaryMask>) -> Result<BinaryMask> {
        Ok(self.0.clone())
    }
}

/// Always predicts an empty mask.
pub struct EmptySegmenter;

impl Segmenter for EmptySegmenter {
    type Features = (usize, usize);

    fn encode(&self, image: &Tensor<f32>) -> Result<(usize, usize)> {
        Ok((image.shape()[1], image.shape()[0]))
    }

    fn segment(&self, f: &(usize, usize), _: &DepthMap, _: &ClickSet, _: Option<&BinaryMask>) -> Result<BinaryMask> {
        Ok(BinaryMask::empty(f.0, f.1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub max_clicks: usize,
    /// The loop stops once IoU reaches this (the highest reported threshold).
    pub stop_iou: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { max_clicks: MAX_CLICKS, stop_iou: 0.95 }
    }
}

pub struct EvalInstance<'a> {
    pub id: String,
    pub image: &'a Tensor<f32>,
    pub depth: &'a DepthMap,
    pub gt: &'a BinaryMask,
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Simulates one user: click, predict, score, repeat.
pub fn run_protocol<S: Segmenter>(model: &S, instance: &EvalInstance<'_>, cfg: &ProtocolConfig) -> InteractionTrace {
    let mut trace = InteractionTrace {
        instance: instance.id.clone(),
        clicks: Vec::new(),
        ious: Vec::new(),
        click_ms: Vec::new(),
        encode_ms: 0.0,
        failure: None,
    };
    let start = Instant::now();
    let features = match model.encode(instance.image) {
        Ok(f) => f,
        Err(e) => {
            trace.failure = Some(e.to_string());
            return trace;
        }
    };
    trace.encode_ms = ms(start);
    let gt = instance.gt;
    let mut pred = BinaryMask::empty(gt.width, gt.height);
    let mut previous: Option<BinaryMask> = None;
    let mut clicks = ClickSet::new();
    for round in 0..cfg.max_clicks {
        let start = Instant::now();
        let click = match next_click(&pred, gt) {
            Ok(c) => Click { round, ..c },
            Err(Error::NoError) => break,
            Err(e) => {
                trace.failure = Some(e.to_string());
                break;
            }
        };
        if let Err(e) = clicks.push(click) {
            trace.failure = Some(e.to_string());
            break;
        }
        match model.segment(&features, instance.depth, &clicks, previous.as_ref()) {
            Ok(m) => pred = m,
            Err(e) => {
                trace.failure = Some(e.to_string());
                break;
            }
        }
        let iou = pred.iou(gt).expect("prediction matches ground-truth size");
        trace.click_ms.push(ms(start));
        trace.clicks.push(click);
        trace.ious.push(iou);
        previous = Some(pred.clone());
        if iou >= cfg.stop_iou {
            break;
        }
    }
    trace
}

/// Seconds to encode the image once and answer a 16×16 grid of
/// independent single positive clicks.
pub fn sat_latency<S: Segmenter>(model: &S, image: &Tensor<f32>, depth: &DepthMap) -> Result<f64> {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let start = Instant::now();
    let features = model.encode(image)?;
    for gy in 0..16 {
        for gx in 0..16 {
            let x = ((2 * gx + 1) * w) / 32;
            let y = ((2 * gy + 1) * h) / 32;
            let mut clicks = ClickSet::new();
            clicks.push(Click::positive(x, y, 0))?;
            model.segment(&features, depth, &clicks, None)?;
        }
    }
    Ok(start.elapsed().as_secs_f64())
}
