//! Synthetic layered scenes: shapes at quantized depths composited
//! far-to-near, with exact depth maps and visible-region masks.

mod generate;
mod io;

pub use generate::{
    bbox_iou, byte_to_unit, generate_scene, layer_depth, InstanceInfo, Scene, Shape, Split, Texture, BACKGROUND_DEPTH,
    DEPTH_LAYERS, MAX_ATTEMPTS, MIN_OVERLAP_BBOX_IOU, MIN_VISIBLE_PIXELS,
};
pub use io::{
    export_dataset, generate_dataset, generate_indexed, image_to_png, import_dataset, mask_to_png, png_to_image,
    png_to_mask, read_manifest, scene_rng, DatasetManifest, DatasetSpec, SceneRecord, SplitRatios, DATASET_FORMAT,
    GENERATOR_VERSION,
};
