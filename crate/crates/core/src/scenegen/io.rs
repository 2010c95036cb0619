//! Dataset layout on disk:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/scenes/<index:05>/image.png   8-bit RGB
//! <dir>/scenes/<index:05>/depth.pfm   32-bit float
//! <dir>/scenes/<index:05>/mask_<k:02>.png  8-bit gray, 0 or 255
//! <dir>/scenes/<index:05>/meta.json   split, shapes, layers, pair, focus
//! ```
//!
//! The manifest records the generation parameters and a SHA-256 per file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::numerics::Tensor;
use crate::order::DepthMap;

use super::generate::{byte_to_unit, generate_scene, InstanceInfo, Scene, Split};

pub const DATASET_FORMAT: &str = "orderseg-dataset";
pub const GENERATOR_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub plain: f64,
    pub overlap: f64,
    pub same_depth: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { plain: 0.4, overlap: 0.4, same_depth: 0.2 }
    }
}

impl SplitRatios {
    pub fn only(split: Split) -> Self {
        let mut r = Self { plain: 0.0, overlap: 0.0, same_depth: 0.0 };
        match split {
            Split::Plain => r.plain = 1.0,
            Split::Overlap => r.overlap = 1.0,
            Split::SameDepth => r.same_depth = 1.0,
        }
        r
    }

    fn validate(&self) -> Result<()> {
        let all = [self.plain, self.overlap, self.same_depth];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) || all.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("split ratios must be non-negative with a positive sum".into()));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Split {
        let total = self.plain + self.overlap + self.same_depth;
        let u: f64 = rng.random::<f64>() * total;
        if u < self.plain {
            Split::Plain
        } else if u < self.plain + self.overlap {
            Split::Overlap
        } else {
            Split::SameDepth
        }
    }
}

/// Parameters that fully determine a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub seed: u64,
    pub count: usize,
    pub size: usize,
    pub splits: SplitRatios,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub index: usize,
    pub split: Split,
    pub dir: String,
    /// File name → SHA-256 (hex).
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub generator_version: u32,
    #[serde(flatten)]
    pub spec: DatasetSpec,
    pub scenes: Vec<SceneRecord>,
}

#[derive(Serialize, Deserialize)]
struct SceneMeta {
    split: Split,
    instances: Vec<InstanceInfo>,
    pair: Option<(usize, usize)>,
    focus: Option<usize>,
}

/// Independent generator stream for scene `index`.
pub fn scene_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn generate_indexed(spec: &DatasetSpec, index: usize) -> Result<Scene> {
    let mut rng = scene_rng(spec.seed, index);
    let split = spec.splits.draw(&mut rng);
    generate_scene(&mut rng, spec.size, split)
}

/// Generates all scenes; scenes are independent, so this runs in parallel.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<Scene>> {
    spec.splits.validate()?;
    (0..spec.count).into_par_iter().map(|i| generate_indexed(spec, i)).collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn encode_png(img: image::DynamicImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn image_to_png(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let bytes = image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf = image::RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer size");
    encode_png(image::DynamicImage::ImageRgb8(buf))
}

pub fn png_to_image(bytes: &[u8]) -> Result<Tensor<f32>> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Tensor::new([h, w, 3], img.into_raw().into_iter().map(byte_to_unit).collect())
}

pub fn mask_to_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    let bytes = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(mask.width as u32, mask.height as u32, bytes).expect("buffer size");
    encode_png(image::DynamicImage::ImageLuma8(buf))
}

pub fn png_to_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.into_raw();
    if raw.iter().any(|&v| v != 0 && v != 255) {
        return Err(Error::Format("mask PNG must contain only 0 and 255".into()));
    }
    BinaryMask::new(w, h, raw.into_iter().map(|v| v == 255).collect())
}

fn scene_files(scene: &Scene) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = vec![
        ("image.png".to_string(), image_to_png(&scene.image)?),
        (
            "depth.pfm".to_string(),
            crate::io::write_pfm(scene.depth.width(), scene.depth.height(), scene.depth.values.data()),
        ),
    ];
    for (k, m) in scene.masks.iter().enumerate() {
        files.push((format!("mask_{k:02}.png"), mask_to_png(m)?));
    }
    let meta = SceneMeta { split: scene.split, instances: scene.instances.clone(), pair: scene.pair, focus: scene.focus };
    files.push(("meta.json".to_string(), serde_json::to_vec_pretty(&meta)?));
    Ok(files)
}

/// Writes scenes and a manifest. The directory must not already hold a dataset.
pub fn export_dataset(dir: &Path, spec: &DatasetSpec, scenes: &[Scene]) -> Result<DatasetManifest> {
    if dir.join("manifest.json").exists() {
        return Err(Error::Dataset(format!("{} already contains a dataset", dir.display())));
    }
    let mut records = Vec::with_capacity(scenes.len());
    for (index, scene) in scenes.iter().enumerate() {
        let rel = format!("scenes/{index:05}");
        let sdir = dir.join(&rel);
        std::fs::create_dir_all(&sdir)?;
        let mut files = BTreeMap::new();
        for (name, bytes) in scene_files(scene)? {
            files.insert(name.clone(), sha256_hex(&bytes));
            std::fs::write(sdir.join(&name), &bytes)?;
        }
        records.push(SceneRecord { index, split: scene.split, dir: rel, files });
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.to_string(),
        generator_version: GENERATOR_VERSION,
        spec: *spec,
        scenes: records,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let bytes = std::fs::read(&path).map_err(|e| Error::Dataset(format!("cannot read {}: {e}", path.display())))?;
    let m: DatasetManifest = serde_json::from_slice(&bytes)?;
    if m.format != DATASET_FORMAT {
        return Err(Error::Format(format!("unknown dataset format {:?}", m.format)));
    }
    if m.generator_version != GENERATOR_VERSION {
        return Err(Error::Format(format!("unsupported generator version {}", m.generator_version)));
    }
    if m.scenes.len() != m.spec.count {
        return Err(Error::Dataset(format!("manifest lists {} scenes, expected {}", m.scenes.len(), m.spec.count)));
    }
    Ok(m)
}

fn read_checked(path: PathBuf, expected: &str) -> Result<Vec<u8>> {
    let bytes = std::fs::read(&path)?;
    if sha256_hex(&bytes) != expected {
        return Err(Error::Corruption { path, reason: "checksum mismatch".into() });
    }
    Ok(bytes)
}

fn load_scene(dir: &Path, rec: &SceneRecord) -> Result<Scene> {
    let sdir = dir.join(&rec.dir);
    let get = |name: &str| -> Result<Vec<u8>> {
        let sum = rec
            .files
            .get(name)
            .ok_or_else(|| Error::Dataset(format!("scene {} has no {name}", rec.index)))?;
        read_checked(sdir.join(name), sum)
    };
    let meta: SceneMeta = serde_json::from_slice(&get("meta.json")?)?;
    let image = png_to_image(&get("image.png")?)?;
    let (w, h, d) = crate::io::read_pfm(&get("depth.pfm")?)?;
    let depth = DepthMap::new(Tensor::new([h, w], d)?, crate::order::DepthProvenance::SyntheticGroundTruth)?;
    let masks = (0..meta.instances.len())
        .map(|k| png_to_mask(&get(&format!("mask_{k:02}.png"))?))
        .collect::<Result<Vec<_>>>()?;
    let scene = Scene { split: meta.split, image, depth, masks, instances: meta.instances, pair: meta.pair, focus: meta.focus };
    scene.validate().map_err(|e| Error::Corruption { path: sdir.clone(), reason: e.to_string() })?;
    if scene.split != rec.split {
        return Err(Error::Corruption { path: sdir, reason: "split differs from manifest".into() });
    }
    Ok(scene)
}

/// Loads every scene, verifying checksums and scene invariants.
pub fn import_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<Scene>)> {
    let manifest = read_manifest(dir)?;
    let scenes = manifest.scenes.iter().map(|r| load_scene(dir, r)).collect::<Result<Vec<_>>>()?;
    Ok((manifest, scenes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> DatasetSpec {
        DatasetSpec { seed: 5, count: 4, size: 32, splits: SplitRatios::default() }
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let scenes = generate_dataset(&spec()).unwrap();
        export_dataset(dir.path(), &spec(), &scenes).unwrap();
        let (m, back) = import_dataset(dir.path()).unwrap();
        assert_eq!(back, scenes);
        assert_eq!(generate_dataset(&m.spec).unwrap(), back);
    }

    #[test]
    fn tampered_depth_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let scenes = generate_dataset(&spec()).unwrap();
        export_dataset(dir.path(), &spec(), &scenes).unwrap();
        let path = dir.path().join("scenes/00002/depth.pfm");
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 0x40;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(import_dataset(dir.path()), Err(Error::Corruption { .. })));
    }

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let scenes = generate_dataset(&spec()).unwrap();
        export_dataset(dir.path(), &spec(), &scenes).unwrap();
        assert!(export_dataset(dir.path(), &spec(), &scenes).is_err());
    }
}
