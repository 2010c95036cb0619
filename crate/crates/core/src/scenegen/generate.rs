//! Layered synthetic scenes with exact depth and visible-region masks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::numerics::Tensor;
use crate::order::{DepthMap, DepthProvenance};

pub const DEPTH_LAYERS: usize = 8;
pub const BACKGROUND_DEPTH: f32 = 10.0;
/// Every instance keeps at least this many visible pixels.
pub const MIN_VISIBLE_PIXELS: usize = 12;
pub const MIN_OVERLAP_BBOX_IOU: f64 = 0.3;
pub const MAX_ATTEMPTS: usize = 200;

pub fn layer_depth(layer: u8) -> f32 {
    1.0 + layer as f32
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    #[default]
    Plain,
    /// Two same-colored flat shapes with overlapping boxes at different depths.
    Overlap,
    /// Two touching shapes at the same depth.
    SameDepth,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Plain, Split::Overlap, Split::SameDepth];

    pub fn name(self) -> &'static str {
        match self {
            Split::Plain => "plain",
            Split::Overlap => "overlap",
            Split::SameDepth => "same-depth",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split {s:?} (expected plain, overlap or same-depth)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Disk { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    /// Convex, vertices counter-clockwise in image coordinates.
    Polygon { points: Vec<[f64; 2]> },
}

impl Shape {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        match self {
            Shape::Disk { cx, cy, r } => (px - cx).powi(2) + (py - cy).powi(2) <= r * r,
            Shape::Rect { x0, y0, x1, y1 } => px >= *x0 && px <= *x1 && py >= *y0 && py <= *y1,
            Shape::Polygon { points } => {
                let n = points.len();
                (0..n).all(|i| {
                    let [ax, ay] = points[i];
                    let [bx, by] = points[(i + 1) % n];
                    (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0.0
                })
            }
        }
    }

    /// `[x0, y0, x1, y1]`.
    pub fn bbox(&self) -> [f64; 4] {
        match self {
            Shape::Disk { cx, cy, r } => [cx - r, cy - r, cx + r, cy + r],
            Shape::Rect { x0, y0, x1, y1 } => [*x0, *y0, *x1, *y1],
            Shape::Polygon { points } => points.iter().fold(
                [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                |b, p| [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])],
            ),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        let b = self.bbox();
        ((b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0)
    }
}

pub fn bbox_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Texture {
    Flat,
    /// Brightness ramp along a unit direction, `±amount` across the image.
    Gradient { dx: f64, dy: f64, amount: f64 },
    /// Per-pixel uniform noise of the given amplitude.
    Noise { amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub shape: Shape,
    pub color: [f64; 3],
    pub texture: Texture,
    pub layer: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub split: Split,
    /// `[H × W × 3]`, every value an exact multiple of 1/255.
    pub image: Tensor<f32>,
    pub depth: DepthMap,
    /// Visible-region masks, pairwise disjoint.
    pub masks: Vec<BinaryMask>,
    pub instances: Vec<InstanceInfo>,
    /// The constrained pair of the overlap and same-depth splits.
    pub pair: Option<(usize, usize)>,
    /// Instance to segment in targeted evaluations (one of `pair`).
    pub focus: Option<usize>,
}

impl Scene {
    pub fn width(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn layer_depths(&self) -> Vec<f32> {
        self.instances.iter().map(|i| layer_depth(i.layer)).collect()
    }

    /// Index of the instance visible at a pixel, if any.
    pub fn owner(&self, x: usize, y: usize) -> Option<usize> {
        self.masks.iter().position(|m| m.get(x, y))
    }

    /// Checks disjointness, depth consistency and the visibility floor.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width(), self.height());
        if (self.depth.width(), self.depth.height()) != (w, h) || self.masks.len() != self.instances.len() {
            return Err(Error::Dataset("scene components disagree in size".into()));
        }
        for y in 0..h {
            for x in 0..w {
                let owners: Vec<usize> = (0..self.masks.len()).filter(|&i| self.masks[i].get(x, y)).collect();
                let d = self.depth.at(x, y);
                match owners.as_slice() {
                    [] if d == BACKGROUND_DEPTH => {}
                    [i] if d == layer_depth(self.instances[*i].layer) => {}
                    _ => return Err(Error::Dataset(format!("pixel ({x}, {y}) breaks the mask/depth invariants"))),
                }
            }
        }
        if self.masks.iter().any(|m| m.count() < MIN_VISIBLE_PIXELS) {
            return Err(Error::Dataset("an instance is almost fully occluded".into()));
        }
        Ok(())
    }
}

/// Maps an 8-bit channel value to `[0, 1]`; PNG import uses the same map.
pub fn byte_to_unit(k: u8) -> f32 {
    k as f32 / 255.0
}

fn quantize(v: f64) -> f32 {
    byte_to_unit((v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random_range(0.1..0.95), rng.random_range(0.1..0.95), rng.random_range(0.1..0.95)]
}

fn random_texture(rng: &mut ChaCha8Rng) -> Texture {
    match rng.random_range(0..3) {
        0 => Texture::Flat,
        1 => {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Texture::Gradient { dx: a.cos(), dy: a.sin(), amount: rng.random_range(0.05..0.2) }
        }
        _ => Texture::Noise { amplitude: rng.random_range(0.02..0.08) },
    }
}

fn random_shape(rng: &mut ChaCha8Rng, size: f64, center: Option<(f64, f64)>, radius: f64) -> Shape {
    let (cx, cy) = center.unwrap_or_else(|| (rng.random_range(0.15 * size..0.85 * size), rng.random_range(0.15 * size..0.85 * size)));
    match rng.random_range(0..3) {
        0 => Shape::Disk { cx, cy, r: radius },
        1 => {
            let aspect: f64 = rng.random_range(0.6..1.6);
            let (hw, hh) = (radius * aspect.sqrt(), radius / aspect.sqrt());
            Shape::Rect { x0: cx - hw, y0: cy - hh, x1: cx + hw, y1: cy + hh }
        }
        _ => {
            let k = rng.random_range(3..=6);
            let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Spread vertices so the polygon is not degenerate.
            for (i, a) in angles.iter_mut().enumerate() {
                *a = 0.5 * *a + 0.5 * (i as f64 + 0.5) * std::f64::consts::TAU / k as f64;
            }
            let points = angles.iter().map(|a| [cx + radius * a.cos(), cy + radius * a.sin()]).collect();
            Shape::Polygon { points }
        }
    }
}

fn random_radius(rng: &mut ChaCha8Rng, size: f64) -> f64 {
    rng.random_range(size / 9.0..size / 4.0)
}

fn plan(rng: &mut ChaCha8Rng, size: usize, split: Split) -> (Vec<InstanceInfo>, Option<(usize, usize)>) {
    let s = size as f64;
    let n = rng.random_range(2..=6usize);
    let mut out = Vec::with_capacity(n);
    let mut pair = None;
    match split {
        Split::Plain => {}
        Split::Overlap => {
            let color = random_color(rng);
            let r0 = random_radius(rng, s);
            let a = random_shape(rng, s, None, r0);
            let (cx, cy) = a.center();
            let r1 = random_radius(rng, s);
            let off = 0.6 * r0.min(r1);
            let c1 = (cx + rng.random_range(-off..off), cy + rng.random_range(-off..off));
            let b = random_shape(rng, s, Some(c1), r1);
            let la = rng.random_range(0..DEPTH_LAYERS as u8);
            let mut lb = rng.random_range(0..DEPTH_LAYERS as u8 - 1);
            if lb >= la {
                lb += 1;
            }
            out.push(InstanceInfo { shape: a, color, texture: Texture::Flat, layer: la });
            out.push(InstanceInfo { shape: b, color, texture: Texture::Flat, layer: lb });
            pair = Some((0, 1));
        }
        Split::SameDepth => {
            let r0 = random_radius(rng, s);
            let a = random_shape(rng, s, None, r0);
            let (cx, cy) = a.center();
            let r1 = random_radius(rng, s);
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let dist = 0.9 * (r0 + r1);
            let b = random_shape(rng, s, Some((cx + dist * angle.cos(), cy + dist * angle.sin())), r1);
            let layer = rng.random_range(0..DEPTH_LAYERS as u8);
            out.push(InstanceInfo { shape: a, color: random_color(rng), texture: random_texture(rng), layer });
            out.push(InstanceInfo { shape: b, color: random_color(rng), texture: random_texture(rng), layer });
            pair = Some((0, 1));
        }
    }
    while out.len() < n {
        let r = random_radius(rng, s);
        out.push(InstanceInfo {
            shape: random_shape(rng, s, None, r),
            color: random_color(rng),
            texture: random_texture(rng),
            layer: rng.random_range(0..DEPTH_LAYERS as u8),
        });
    }
    (out, pair)
}

fn shade(color: [f64; 3], texture: &Texture, x: usize, y: usize, size: usize, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let t = match texture {
        Texture::Flat => 0.0,
        Texture::Gradient { dx, dy, amount } => {
            let u = (x as f64 + 0.5) / size as f64 - 0.5;
            let v = (y as f64 + 0.5) / size as f64 - 0.5;
            2.0 * amount * (u * dx + v * dy)
        }
        Texture::Noise { amplitude } => rng.random_range(-amplitude..*amplitude),
    };
    [color[0] + t, color[1] + t, color[2] + t]
}

fn touching(a: &BinaryMask, b: &BinaryMask) -> bool {
    (0..a.height).any(|y| {
        (0..a.width).any(|x| {
            a.get(x, y)
                && ((x + 1 < a.width && b.get(x + 1, y))
                    || (x > 0 && b.get(x - 1, y))
                    || (y + 1 < a.height && b.get(x, y + 1))
                    || (y > 0 && b.get(x, y - 1)))
        })
    })
}

fn try_generate(rng: &mut ChaCha8Rng, size: usize, split: Split) -> Option<Scene> {
    let (instances, pair) = plan(rng, size, split);
    if let (Split::Overlap, Some((a, b))) = (split, pair) {
        if bbox_iou(instances[a].shape.bbox(), instances[b].shape.bbox()) < MIN_OVERLAP_BBOX_IOU {
            return None;
        }
    }
    // Far to near; equal depths keep their index order.
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by(|&i, &j| instances[j].layer.cmp(&instances[i].layer).then(i.cmp(&j)));
    let mut owner: Vec<Option<usize>> = vec![None; size * size];
    for &i in &order {
        for y in 0..size {
            for x in 0..size {
                if instances[i].shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    owner[y * size + x] = Some(i);
                }
            }
        }
    }
    let masks: Vec<BinaryMask> = (0..instances.len())
        .map(|i| BinaryMask::new(size, size, owner.iter().map(|o| *o == Some(i)).collect()).expect("size"))
        .collect();
    if masks.iter().any(|m| m.count() < MIN_VISIBLE_PIXELS) {
        return None;
    }
    if let (Split::SameDepth, Some((a, b))) = (split, pair) {
        if !touching(&masks[a], &masks[b]) {
            return None;
        }
    }

    let background = [rng.random_range(0.05..0.9), rng.random_range(0.05..0.9), rng.random_range(0.05..0.9)];
    let bg_texture = if rng.random_bool(0.5) { Texture::Flat } else { random_texture(rng) };
    let mut image = Vec::with_capacity(size * size * 3);
    let mut depth = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (rgb, d) = match owner[y * size + x] {
                Some(i) => {
                    let inst = &instances[i];
                    (shade(inst.color, &inst.texture, x, y, size, rng), layer_depth(inst.layer))
                }
                None => (shade(background, &bg_texture, x, y, size, rng), BACKGROUND_DEPTH),
            };
            image.extend(rgb.iter().map(|&c| quantize(c)));
            depth.push(d);
        }
    }
    let focus = pair.map(|(a, b)| if rng.random_bool(0.5) { a } else { b });
    Some(Scene {
        split,
        image: Tensor::new([size, size, 3], image).expect("size"),
        depth: DepthMap::new(Tensor::new([size, size], depth).expect("size"), DepthProvenance::SyntheticGroundTruth)
            .expect("valid depth"),
        masks,
        instances,
        pair,
        focus,
    })
}

/// Draws one scene, resampling until the split's constraints hold.
pub fn generate_scene(rng: &mut ChaCha8Rng, size: usize, split: Split) -> Result<Scene> {
    if size < 32 {
        return Err(Error::Config(format!("scene size must be at least 32, got {size}")));
    }
    for _ in 0..MAX_ATTEMPTS {
        if let Some(scene) = try_generate(rng, size, split) {
            return Ok(scene);
        }
    }
    Err(Error::Generation(MAX_ATTEMPTS))
}
