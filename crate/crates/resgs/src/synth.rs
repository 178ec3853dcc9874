//! Synthetic datasets on disk.

use std::fs;
use std::path::Path;

use resgs_core::synthetic::{make_scene, SyntheticSpec};
use resgs_core::GaussianCloud;

use crate::error::{Error, Result};
use crate::imageio::{save_image, RAW_EXTENSION};
use crate::manifest::{write_manifest, DatasetManifest, ViewEntry};
use crate::ply::{save_checkpoint, CheckpointMeta};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.ply";

/// Render `spec` into `dir`: `manifest.json`, `images/view_NNN.rgbf` and
/// `ground_truth.ply`. With `png_previews`, a PNG copy of every view is
/// written next to its raw image.
pub fn make_synthetic(
    spec: &SyntheticSpec,
    dir: &Path,
    png_previews: bool,
) -> Result<(DatasetManifest, GaussianCloud)> {
    let scene = make_scene(spec)?;
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let name = |i: usize| format!("view_{i:03}");
    let mut views = Vec::with_capacity(scene.cameras.len());
    for (i, (camera, image)) in scene.cameras.iter().zip(&scene.images).enumerate() {
        let rel = Path::new("images").join(format!("{}.{RAW_EXTENSION}", name(i)));
        save_image(image, &dir.join(&rel))?;
        if png_previews {
            save_image(image, &dir.join("images").join(format!("{}.png", name(i))))?;
        }
        views.push(ViewEntry {
            name: name(i),
            image: rel,
            camera: camera.clone(),
        });
    }
    let manifest = DatasetManifest {
        views,
        train: scene.train.iter().map(|&i| name(i)).collect(),
        test: scene.test.iter().map(|&i| name(i)).collect(),
        points: scene.init_points.clone(),
    };
    write_manifest(&manifest, &dir.join(MANIFEST_FILE))?;
    save_checkpoint(
        &scene.ground_truth,
        &dir.join(GROUND_TRUTH_FILE),
        true,
        &CheckpointMeta::default(),
    )?;
    Ok((manifest, scene.ground_truth))
}
