//! Dataset manifests: a JSON file naming each view's image and camera, the
//! train/test split and an optional initial point set.
//!
//! ```json
//! {
//!   "views": [
//!     { "name": "view_000", "image": "images/view_000.rgbf",
//!       "camera": { "fx": 140.8, "fy": 140.8, "cx": 63.5, "cy": 63.5,
//!                   "width": 128, "height": 128,
//!                   "rotation": [[1,0,0],[0,1,0],[0,0,1]],
//!                   "translation": [0,0,2.5] } }
//!   ],
//!   "train": ["view_000"],
//!   "test": [],
//!   "points": [ { "position": [0,0,0], "rgb": [0.5,0.5,0.5] } ]
//! }
//! ```
//!
//! Image paths are relative to the manifest. Cameras map world to camera
//! coordinates (`x_cam = rotation * x + translation`), `+z` forward, `y`
//! down, pixel centers at integer coordinates.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use resgs_core::init::ColoredPoint;
use resgs_core::trainer::{Dataset, View};
use resgs_core::Camera;

use crate::error::{Error, Result};
use crate::imageio::load_image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub name: String,
    pub image: PathBuf,
    pub camera: Camera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub views: Vec<ViewEntry>,
    pub train: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
    #[serde(default)]
    pub points: Vec<ColoredPoint>,
}

impl DatasetManifest {
    /// Structural checks that need no file access.
    pub fn validate(&self, path: &Path) -> Result<()> {
        let bad = |msg: String| Error::format(path, msg);
        let mut names = HashSet::new();
        for v in &self.views {
            if !names.insert(v.name.as_str()) {
                return Err(bad(format!("duplicate view name {}", v.name)));
            }
            v.camera
                .validate()
                .map_err(|e| bad(format!("view {}: {e}", v.name)))?;
        }
        if self.train.is_empty() {
            return Err(bad("no training views".into()));
        }
        let mut seen = HashSet::new();
        for name in self.train.iter().chain(&self.test) {
            if !names.contains(name.as_str()) {
                return Err(bad(format!("split names unknown view {name}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(bad(format!("view {name} appears twice in the splits")));
            }
        }
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    manifest.validate(path)?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let text =
        serde_json::to_string_pretty(manifest).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Load a manifest and every image it names.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let load = |name: &String| -> Result<View> {
        let entry = manifest
            .views
            .iter()
            .find(|v| &v.name == name)
            .expect("split names validated");
        let image_path = base.join(&entry.image);
        let image = load_image(&image_path)?;
        if image.dims() != (entry.camera.width, entry.camera.height) {
            return Err(Error::format(
                &image_path,
                format!(
                    "image is {}x{} but view {} has a {}x{} camera",
                    image.width(),
                    image.height(),
                    entry.name,
                    entry.camera.width,
                    entry.camera.height
                ),
            ));
        }
        Ok(View {
            name: entry.name.clone(),
            camera: entry.camera.clone(),
            image,
        })
    };
    Ok(Dataset {
        train: manifest.train.iter().map(load).collect::<Result<_>>()?,
        test: manifest.test.iter().map(load).collect::<Result<_>>()?,
        points: manifest.points.clone(),
    })
}
