//! PNG panels: order maps per click, attention heatmaps before and after the
//! order penalty, and mask overlays.

use image::{GrayImage, ImageFormat, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::AttentionWeights;
use crate::numerics::Tensor;
use crate::order::{order_maps, DepthMap, OrderMap, OrderNormalization};
use crate::prompts::{ClickSet, Polarity};

const POSITIVE_COLOR: Rgb<u8> = Rgb([40, 200, 70]);
const NEGATIVE_COLOR: Rgb<u8> = Rgb([220, 40, 40]);
const MASK_COLOR: [f32; 3] = [30.0, 120.0, 255.0];
const GAP: u32 = 4;

fn encode<I>(img: I) -> Result<Vec<u8>>
where
    image::DynamicImage: From<I>,
{
    let mut buf = std::io::Cursor::new(Vec::new());
    image::DynamicImage::from(img).write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn png_bytes(img: &RgbImage) -> Result<Vec<u8>> {
    encode(img.clone())
}

/// 8-bit grayscale of a `[0, 1]` map: value × 255, rounded.
pub fn order_map_gray(map: &OrderMap) -> GrayImage {
    let (h, w) = (map.values.shape()[0], map.values.shape()[1]);
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = map.values.data()[y as usize * w + x as usize];
        Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

pub fn order_map_png(map: &OrderMap) -> Result<Vec<u8>> {
    encode(order_map_gray(map))
}

pub fn image_rgb(image: &Tensor<f32>) -> RgbImage {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let d = image.data();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = (y as usize * w + x as usize) * 3;
        Rgb([0, 1, 2].map(|c| (d[i + c].clamp(0.0, 1.0) * 255.0).round() as u8))
    })
}

fn gray_to_rgb(g: &GrayImage) -> RgbImage {
    RgbImage::from_fn(g.width(), g.height(), |x, y| {
        let v = g.get_pixel(x, y)[0];
        Rgb([v, v, v])
    })
}

/// Black → red → yellow → white ramp for `t ∈ [0, 1]`.
fn heat(t: f32) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0) * 3.0;
    let r = t.min(1.0);
    let g = (t - 1.0).clamp(0.0, 1.0);
    let b = (t - 2.0).clamp(0.0, 1.0);
    Rgb([r, g, b].map(|c| (c * 255.0).round() as u8))
}

/// Nearest-neighbour upsampled heatmap of one `[gh × gw]` weight row,
/// scaled by `scale` (values ≥ scale saturate).
pub fn heatmap(row: &[f32], grid: (usize, usize), width: usize, height: usize, scale: f32) -> RgbImage {
    let (gh, gw) = grid;
    RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let gx = x as usize * gw / width;
        let gy = y as usize * gh / height;
        heat(if scale > 0.0 { row[gy * gw + gx] / scale } else { 0.0 })
    })
}

/// Blends the mask in at 50% and draws click markers.
pub fn overlay(image: &Tensor<f32>, mask: Option<&BinaryMask>, clicks: &ClickSet) -> RgbImage {
    let mut img = image_rgb(image);
    if let Some(m) = mask {
        for (x, y, p) in img.enumerate_pixels_mut() {
            if m.get(x as usize, y as usize) {
                for c in 0..3 {
                    p[c] = ((p[c] as f32 + MASK_COLOR[c]) / 2.0).round() as u8;
                }
            }
        }
    }
    for c in clicks.chronological() {
        let color = if c.polarity == Polarity::Positive { POSITIVE_COLOR } else { NEGATIVE_COLOR };
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (x, y) = (c.x as i64 + dx, c.y as i64 + dy);
                if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    img
}

/// Places panels side by side on a white background.
pub fn hstack(panels: &[RgbImage]) -> RgbImage {
    let w = panels.iter().map(|p| p.width()).sum::<u32>() + GAP * panels.len().saturating_sub(1) as u32;
    let h = panels.iter().map(|p| p.height()).max().unwrap_or(0);
    let mut out = RgbImage::from_pixel(w.max(1), h.max(1), Rgb([255, 255, 255]));
    let mut x0 = 0;
    for p in panels {
        image::imageops::replace(&mut out, p, x0 as i64, 0);
        x0 += p.width() + GAP;
    }
    out
}

/// Order maps of a click set: the shared positive map first, then one per
/// negative click.
pub fn order_map_panels(depth: &DepthMap, clicks: &ClickSet, norm: OrderNormalization) -> Result<Vec<RgbImage>> {
    let (pos, negs) = order_maps(depth, clicks, norm)?;
    Ok(pos.iter().chain(&negs).map(|m| gray_to_rgb(&order_map_gray(m))).collect())
}

/// `[image | before | after]` for one slot; both heatmaps share a scale.
pub fn attention_panel(image: &Tensor<f32>, weights: &AttentionWeights<f32>, slot: usize, clicks: &ClickSet) -> Result<RgbImage> {
    if slot >= weights.before.rows() {
        return Err(Error::Validation(format!("slot {slot} out of range")));
    }
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let before = weights.before.row(slot);
    let after = weights.after.row(slot);
    let scale = before.iter().chain(after).copied().fold(0.0f32, f32::max);
    Ok(hstack(&[
        overlay(image, None, clicks),
        heatmap(before, weights.grid, w, h, scale),
        heatmap(after, weights.grid, w, h, scale),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::Click;

    #[test]
    fn flat_depth_gives_black_panel() {
        let depth = DepthMap::flat(8, 6);
        let mut clicks = ClickSet::new();
        clicks.push(Click::positive(2, 3, 0)).unwrap();
        let panels = order_map_panels(&depth, &clicks, OrderNormalization::PerMap).unwrap();
        assert_eq!(panels.len(), 1);
        assert_eq!((panels[0].width(), panels[0].height()), (8, 6));
        assert!(panels[0].pixels().all(|p| p.0 == [0, 0, 0]));
    }

    #[test]
    fn gray_png_decodes_to_scaled_values() {
        let map = OrderMap { values: Tensor::new([1, 3], vec![0.0, 0.5, 1.0]).unwrap() };
        let bytes = order_map_png(&map).unwrap();
        let back = image::load_from_memory(&bytes).unwrap().to_luma8();
        assert_eq!(back.into_raw(), vec![0, 128, 255]);
    }

    #[test]
    fn hstack_width_includes_gaps() {
        let a = RgbImage::new(5, 3);
        let b = RgbImage::new(7, 4);
        let s = hstack(&[a, b]);
        assert_eq!((s.width(), s.height()), (5 + 7 + GAP, 4));
    }
}
