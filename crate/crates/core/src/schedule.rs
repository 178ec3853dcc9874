//! Coarse-to-fine supervision: the per-view image pyramid and the clock that
//! maps an iteration to its stage, global substage and pyramid level.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::Camera;

/// Halve an image with a 2x2 box filter. Output size is `max(1, floor(n/2))`
/// per axis; source indices past the last row/column are clamped.
pub fn downsample(img: &Image) -> Image {
    let (w, h) = img.dims();
    let ow = (w / 2).max(1);
    let oh = (h / 2).max(1);
    let mut out = Image::new(ow, oh);
    for y in 0..oh {
        let y0 = (2 * y).min(h - 1);
        let y1 = (2 * y + 1).min(h - 1);
        for x in 0..ow {
            let x0 = (2 * x).min(w - 1);
            let x1 = (2 * x + 1).min(w - 1);
            let (a, b, c, d) = (
                img.get(x0, y0),
                img.get(x1, y0),
                img.get(x0, y1),
                img.get(x1, y1),
            );
            out.set(
                x,
                y,
                core::array::from_fn(|ch| 0.25 * (a[ch] + b[ch] + c[ch] + d[ch])),
            );
        }
    }
    out
}

/// Size of pyramid level `level` (1-based, `levels` = finest) for an
/// original of `width x height`.
pub fn level_dims(width: usize, height: usize, level: usize, levels: usize) -> (usize, usize) {
    let shift = levels - level;
    ((width >> shift).max(1), (height >> shift).max(1))
}

/// Intrinsics scale factor for a pyramid level.
pub fn level_scale(level: usize, levels: usize) -> f64 {
    1.0 / (1u64 << (levels - level)) as f64
}

/// `camera` re-targeted to pyramid level `level`.
pub fn camera_for_level(camera: &Camera, level: usize, levels: usize) -> Camera {
    if level == levels {
        return camera.clone();
    }
    let (w, h) = level_dims(camera.width, camera.height, level, levels);
    camera.with_resolution(w, h, level_scale(level, levels))
}

/// Every view at every resolution; level `L` holds the originals.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePyramid {
    levels: Vec<Vec<Image>>,
}

impl ImagePyramid {
    pub fn build(views: &[Image], levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Config("pyramid needs at least one level".into()));
        }
        if views.iter().any(|v| v.width() == 0 || v.height() == 0) {
            return Err(Error::Shape("empty view image".into()));
        }
        let mut stack: Vec<Vec<Image>> = Vec::with_capacity(levels);
        stack.push(views.to_vec());
        for _ in 1..levels {
            let next = stack
                .last()
                .map(|prev| prev.iter().map(downsample).collect())
                .unwrap_or_default();
            stack.push(next);
        }
        stack.reverse();
        Ok(Self { levels: stack })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Images of level `level`, 1-based.
    pub fn level(&self, level: usize) -> &[Image] {
        &self.levels[level - 1]
    }

    pub fn image(&self, level: usize, view: usize) -> &Image {
        &self.levels[level - 1][view]
    }
}

/// Where an iteration falls in the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageInfo {
    /// 1-based stage index.
    pub stage: usize,
    /// 0-based global substage index, `0..L*K`.
    pub substage: usize,
    /// Pyramid level supervising this stage.
    pub level: usize,
}

/// Stage boundaries, given either as absolute iterations or as fractions of
/// the total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageBoundaries {
    Absolute(Vec<usize>),
    Fractions(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageClock {
    substages_per_stage: usize,
    boundaries: Vec<usize>,
    substage_starts: Vec<usize>,
}

impl StageClock {
    /// `boundaries[i]` is the exclusive end of stage `i + 1`; the last one is
    /// the total iteration count.
    pub fn new(substages_per_stage: usize, boundaries: Vec<usize>) -> Result<Self> {
        if boundaries.is_empty() {
            return Err(Error::Config("at least one stage is required".into()));
        }
        if substages_per_stage == 0 {
            return Err(Error::Config(
                "at least one substage per stage is required".into(),
            ));
        }
        if boundaries[0] == 0 || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "stage boundaries must be positive and strictly increasing".into(),
            ));
        }
        let mut prev = 0;
        for &end in &boundaries {
            if end - prev < substages_per_stage {
                return Err(Error::Config(alloc::format!(
                    "stage ending at {end} is shorter than its {substages_per_stage} substages"
                )));
            }
            prev = end;
        }
        let mut substage_starts = Vec::with_capacity(boundaries.len() * substages_per_stage);
        let mut start = 0;
        for &end in &boundaries {
            let span = (end - start) / substages_per_stage;
            for j in 0..substages_per_stage {
                substage_starts.push(start + j * span);
            }
            start = end;
        }
        Ok(Self {
            substages_per_stage,
            boundaries,
            substage_starts,
        })
    }

    pub fn from_boundaries(
        total: usize,
        substages_per_stage: usize,
        spec: &StageBoundaries,
    ) -> Result<Self> {
        let boundaries = match spec {
            StageBoundaries::Absolute(b) => b.clone(),
            StageBoundaries::Fractions(f) => f
                .iter()
                .map(|&frac| libm::round(frac * total as f64) as usize)
                .collect(),
        };
        if boundaries.last() != Some(&total) {
            return Err(Error::Config(alloc::format!(
                "last stage boundary must equal the total iteration count {total}"
            )));
        }
        Self::new(substages_per_stage, boundaries)
    }

    pub fn stages(&self) -> usize {
        self.boundaries.len()
    }

    pub fn substages_per_stage(&self) -> usize {
        self.substages_per_stage
    }

    pub fn total(&self) -> usize {
        *self.boundaries.last().unwrap_or(&0)
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Start iteration of every global substage.
    pub fn substage_starts(&self) -> &[usize] {
        &self.substage_starts
    }

    pub fn stage_at(&self, iteration: usize) -> Result<StageInfo> {
        if iteration >= self.total() {
            return Err(Error::OutOfBounds {
                index: iteration,
                len: self.total(),
            });
        }
        let stage = self.boundaries.partition_point(|&b| b <= iteration) + 1;
        let substage = self.substage_starts.partition_point(|&s| s <= iteration) - 1;
        Ok(StageInfo {
            stage,
            substage,
            level: stage,
        })
    }
}
