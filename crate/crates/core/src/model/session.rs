//! Interactive session: the image is encoded once, then every click reuses
//! the cached features.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::numerics::Tensor;
use crate::order::{negative_order_map_with, positive_order_map_with, DepthMap, OrderMap};
use crate::prompts::{Click, ClickSet, Polarity};

use super::{FeatureMap, Model, RoundInput};

/// State that undo restores.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionSnapshot {
    pub clicks: ClickSet,
    pub previous: Option<BinaryMask>,
    pub round: usize,
}

#[derive(Clone, Debug)]
pub struct RoundResult {
    /// 1-based index of the round just completed.
    pub round: usize,
    pub mask: BinaryMask,
    /// Order map the new click contributes: the shared positive map or the
    /// click's own negative map.
    pub order_map: OrderMap,
    pub iou: Option<f64>,
    pub elapsed: Duration,
}

pub struct Session {
    features: FeatureMap<f32>,
    depth: DepthMap,
    gt: Option<BinaryMask>,
    clicks: ClickSet,
    previous: Option<BinaryMask>,
    history: Vec<SessionSnapshot>,
    ious: Vec<f64>,
    click_times: Vec<Duration>,
    encode_time: Duration,
    encoder_calls: u64,
}

impl Session {
    /// Encodes the image; a missing depth map means flat depth.
    pub fn new(model: &Model<f32>, image: &Tensor<f32>, depth: Option<DepthMap>, gt: Option<BinaryMask>) -> Result<Self> {
        let start = Instant::now();
        let features = model.encode_image(image)?;
        let encode_time = start.elapsed();
        let size = features.image_size;
        let depth = depth.unwrap_or_else(|| DepthMap::flat(size.width, size.height));
        if (depth.width(), depth.height()) != (size.width, size.height) {
            return Err(Error::Dimension(format!(
                "depth map {}×{} does not match image {}×{}",
                depth.width(),
                depth.height(),
                size.width,
                size.height
            )));
        }
        if let Some(g) = &gt {
            if (g.width, g.height) != (size.width, size.height) {
                return Err(Error::Dimension("ground-truth mask does not match the image".into()));
            }
        }
        Ok(Self {
            features,
            depth,
            gt,
            clicks: ClickSet::new(),
            previous: None,
            history: Vec::new(),
            ious: Vec::new(),
            click_times: Vec::new(),
            encode_time,
            encoder_calls: 1,
        })
    }

    pub fn round(&self) -> usize {
        self.clicks.len()
    }

    pub fn clicks(&self) -> &ClickSet {
        &self.clicks
    }

    pub fn previous(&self) -> Option<&BinaryMask> {
        self.previous.as_ref()
    }

    pub fn features(&self) -> &FeatureMap<f32> {
        &self.features
    }

    pub fn depth(&self) -> &DepthMap {
        &self.depth
    }

    pub fn ious(&self) -> &[f64] {
        &self.ious
    }

    pub fn has_gt(&self) -> bool {
        self.gt.is_some()
    }

    pub fn click_times(&self) -> &[Duration] {
        &self.click_times
    }

    /// Encoder runs made on behalf of this session.
    pub fn encoder_calls(&self) -> u64 {
        self.encoder_calls
    }

    pub fn encode_time(&self) -> Duration {
        self.encode_time
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot { clicks: self.clicks.clone(), previous: self.previous.clone(), round: self.round() }
    }

    /// Adds a click and predicts a new mask. On error the session is unchanged.
    pub fn click(&mut self, model: &Model<f32>, x: usize, y: usize, polarity: Polarity) -> Result<RoundResult> {
        let start = Instant::now();
        let round = self.round();
        let click = Click { x, y, polarity, round };
        click.check_bounds(self.features.image_size)?;
        let mut clicks = self.clicks.clone();
        clicks.push(click)?;
        let previous = self.previous.as_ref().map(|m| m.to_previous(round));
        let input = RoundInput { depth: &self.depth, clicks: &clicks, previous: previous.as_ref() };
        let mask = model.predict(&self.features, &input)?;
        let norm = model.config.order_normalization;
        let order_map = match polarity {
            Polarity::Positive => positive_order_map_with(&self.depth, &clicks, norm)?,
            Polarity::Negative => negative_order_map_with(&self.depth, &click, norm)?,
        };
        let iou = self.gt.as_ref().map(|g| mask.iou(g)).transpose()?;
        let elapsed = start.elapsed();

        self.history.push(self.snapshot());
        self.clicks = clicks;
        self.previous = Some(mask.clone());
        if let Some(v) = iou {
            self.ious.push(v);
        }
        self.click_times.push(elapsed);
        Ok(RoundResult { round: round + 1, mask, order_map, iou, elapsed })
    }

    /// Restores the state before the last click.
    pub fn undo(&mut self) -> Result<()> {
        let snap = self.history.pop().ok_or(Error::NothingToUndo)?;
        self.clicks = snap.clicks;
        self.previous = snap.previous;
        if self.gt.is_some() {
            self.ious.pop();
        }
        self.click_times.pop();
        Ok(())
    }
}
