//! Density control: gradient-driven selection with level-dependent
//! thresholds, the residual split, the classic split/clone, pruning and
//! periodic opacity reduction.
//!
//! Residual split keeps the selected Gaussian, appends a copy shrunk by
//! `lambda_s` at a position drawn from the parent's own distribution, then
//! scales the parent's opacity by `beta`. The child sits one level above its
//! parent. Selection at global substage `k` compares each Gaussian's mean
//! viewspace gradient against
//!
//! ```text
//! tau_k(l) = tau                  if l >= k
//!          = tau / alpha^(k - l)  otherwise
//! ```

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::model::{sample_position, Camera, GaussianCloud};
use crate::raster::ViewspaceGradStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensifyMode {
    ResidualSplit,
    BaselineSplitClone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradSource {
    /// Norm of the summed per-pixel gradient.
    Signed,
    /// Per-pixel magnitudes summed per axis before the norm.
    Absolute,
}

/// Number of children a baseline split produces.
pub const BASELINE_SPLIT_CHILDREN: usize = 2;
/// Scale divisor for baseline split children.
pub const BASELINE_SPLIT_DIVISOR: f64 = 1.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifyConfig {
    pub mode: DensifyMode,
    pub grad_source: GradSource,
    /// Base gradient threshold.
    pub tau: f64,
    /// Threshold base, `> 1`.
    pub alpha: f64,
    /// Residual child scale divisor, `> 1`.
    pub lambda_s: f64,
    /// Parent opacity factor after a residual split, in (0, 1).
    pub beta: f64,
    /// Lower the threshold for Gaussians below the current substage.
    pub varying_threshold: bool,
    /// Split/clone scale threshold as a fraction of the scene extent.
    pub baseline_percent_dense: f64,
    /// Scene extent; derived from the training cameras when absent.
    pub scene_extent: Option<f64>,
    pub prune_opacity_eps: f64,
    pub opacity_reduction_factor: f64,
    pub opacity_reduction_interval: usize,
    /// Keep reducing opacity after densification has stopped.
    pub opacity_reduction_after_densify: bool,
    pub densify_interval: usize,
    pub densify_start: usize,
    pub densify_stop: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            mode: DensifyMode::ResidualSplit,
            grad_source: GradSource::Absolute,
            tau: 0.00067,
            alpha: libm::cbrt(2.0),
            lambda_s: 1.6,
            beta: 0.3,
            varying_threshold: true,
            baseline_percent_dense: 0.01,
            scene_extent: None,
            prune_opacity_eps: 0.005,
            opacity_reduction_factor: 0.6,
            opacity_reduction_interval: 600,
            opacity_reduction_after_densify: true,
            densify_interval: 100,
            densify_start: 500,
            densify_stop: 12000,
        }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.tau > 0.0) {
            return fail("tau must be positive");
        }
        if !(self.alpha > 1.0) {
            return fail("alpha must exceed 1");
        }
        if !(self.lambda_s > 1.0) {
            return fail("lambda_s must exceed 1");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return fail("beta must lie in (0, 1)");
        }
        if !(self.prune_opacity_eps > 0.0 && self.prune_opacity_eps < 1.0) {
            return fail("prune_opacity_eps must lie in (0, 1)");
        }
        if !(self.opacity_reduction_factor > 0.0 && self.opacity_reduction_factor < 1.0) {
            return fail("opacity_reduction_factor must lie in (0, 1)");
        }
        if self.densify_interval == 0 || self.opacity_reduction_interval == 0 {
            return fail("intervals must be at least 1");
        }
        if self.densify_start > self.densify_stop {
            return fail("densify_start must not exceed densify_stop");
        }
        if let Some(r) = self.scene_extent {
            if !(r > 0.0) {
                return fail("scene_extent must be positive");
            }
        }
        if !(self.baseline_percent_dense > 0.0) {
            return fail("baseline_percent_dense must be positive");
        }
        Ok(())
    }
}

/// One Gaussian added by a densification operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Created {
    pub id: u64,
    pub parent: u64,
    pub level: u32,
}

/// What a density-control pass did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DensifyReport {
    pub selected: Vec<u64>,
    pub created: Vec<Created>,
    /// Parents replaced by a baseline split.
    pub replaced: Vec<u64>,
    /// Removed for low opacity.
    pub pruned: Vec<u64>,
    pub count_before: usize,
    pub count_after: usize,
}

impl DensifyReport {
    fn starting(cloud: &GaussianCloud) -> Self {
        Self {
            count_before: cloud.len(),
            count_after: cloud.len(),
            ..Default::default()
        }
    }

    /// Fold a later report into this one.
    pub fn merge(&mut self, later: DensifyReport) {
        if self.selected.is_empty()
            && self.created.is_empty()
            && self.pruned.is_empty()
            && self.replaced.is_empty()
        {
            self.count_before = self.count_before.max(later.count_before);
        }
        self.selected.extend(later.selected);
        self.created.extend(later.created);
        self.replaced.extend(later.replaced);
        self.pruned.extend(later.pruned);
        self.count_after = later.count_after;
    }

    /// Gaussians removed by any operator.
    pub fn removed_count(&self) -> usize {
        self.replaced.len() + self.pruned.len()
    }
}

/// Selection threshold for a Gaussian at `level` during global substage
/// `substage`.
pub fn threshold_for(level: u32, substage: usize, cfg: &DensifyConfig) -> f64 {
    let level = level as usize;
    if level >= substage {
        cfg.tau
    } else {
        cfg.tau / math::powf(cfg.alpha, (substage - level) as f64)
    }
}

/// Mean viewspace gradient of Gaussian `i` over the window, by `source`.
pub fn mean_grad(stats: &ViewspaceGradStats, i: usize, source: GradSource) -> Option<f64> {
    let count = stats.observation_count[i];
    if count == 0 {
        return None;
    }
    let sum = match source {
        GradSource::Signed => stats.signed_grad_norm_sum[i],
        GradSource::Absolute => stats.abs_grad_norm_sum[i],
    };
    Some(sum / count as f64)
}

/// Ids of the Gaussians to densify, ascending.
pub fn select(
    stats: &ViewspaceGradStats,
    cloud: &GaussianCloud,
    substage: usize,
    cfg: &DensifyConfig,
) -> Result<Vec<u64>> {
    if stats.len() != cloud.len() {
        return Err(Error::Shape(alloc::format!(
            "stats cover {} gaussians, cloud has {}",
            stats.len(),
            cloud.len()
        )));
    }
    let levels = cloud.levels();
    Ok((0..cloud.len())
        .filter(|&i| {
            let Some(g) = mean_grad(stats, i, cfg.grad_source) else {
                return false;
            };
            let threshold = if cfg.varying_threshold {
                threshold_for(levels[i], substage, cfg)
            } else {
                cfg.tau
            };
            g >= threshold
        })
        .map(|i| cloud.ids()[i])
        .collect())
}

/// Append a downscaled replica of `id` sampled from its distribution and
/// reduce the original's opacity by `beta`.
pub fn residual_split<R: Rng + ?Sized>(
    cloud: &mut GaussianCloud,
    id: u64,
    cfg: &DensifyConfig,
    rng: &mut R,
) -> Result<DensifyReport> {
    let index = cloud.index_of(id).ok_or(Error::NotFound { id })?;
    let mut report = DensifyReport::starting(cloud);
    let parent = cloud.get(index);
    let mut child = parent.clone();
    let shrink = math::ln(cfg.lambda_s);
    child.log_scale = parent.log_scale.map(|s| s - shrink);
    child.position = sample_position(&parent.position, &parent.log_scale, &parent.rotation, rng);
    child.level = parent.level + 1;
    let child_id = cloud.push(child)?;
    cloud.set_opacity(index, cfg.beta * parent.opacity());
    report.selected.push(id);
    report.created.push(Created {
        id: child_id,
        parent: id,
        level: parent.level + 1,
    });
    report.count_after = cloud.len();
    Ok(report)
}

/// Split threshold `percent_dense * extent`.
pub fn split_scale_threshold(cfg: &DensifyConfig, scene_extent: f64) -> f64 {
    cfg.baseline_percent_dense * scene_extent
}

/// Classic densification: split a large Gaussian into two smaller samples,
/// or clone a small one in place.
pub fn baseline_densify<R: Rng + ?Sized>(
    cloud: &mut GaussianCloud,
    id: u64,
    cfg: &DensifyConfig,
    scene_extent: f64,
    rng: &mut R,
) -> Result<DensifyReport> {
    let index = cloud.index_of(id).ok_or(Error::NotFound { id })?;
    let mut report = DensifyReport::starting(cloud);
    report.selected.push(id);
    let parent = cloud.get(index);
    let max_scale = parent.scales().into_iter().fold(f64::MIN, f64::max);
    if max_scale >= split_scale_threshold(cfg, scene_extent) {
        let shrink = math::ln(BASELINE_SPLIT_DIVISOR);
        for _ in 0..BASELINE_SPLIT_CHILDREN {
            let mut child = parent.clone();
            child.position =
                sample_position(&parent.position, &parent.log_scale, &parent.rotation, rng);
            child.log_scale = parent.log_scale.map(|s| s - shrink);
            let cid = cloud.push(child)?;
            report.created.push(Created {
                id: cid,
                parent: id,
                level: parent.level,
            });
        }
        let index = cloud.index_of(id).ok_or(Error::NotFound { id })?;
        cloud.remove(index);
        report.replaced.push(id);
    } else {
        let cid = cloud.push(parent.clone())?;
        report.created.push(Created {
            id: cid,
            parent: id,
            level: parent.level,
        });
    }
    report.count_after = cloud.len();
    Ok(report)
}

/// Apply the configured operator to every id in `ids`, in order.
pub fn densify<R: Rng + ?Sized>(
    cloud: &mut GaussianCloud,
    ids: &[u64],
    cfg: &DensifyConfig,
    scene_extent: f64,
    rng: &mut R,
) -> Result<DensifyReport> {
    let mut report = DensifyReport::starting(cloud);
    for &id in ids {
        let step = match cfg.mode {
            DensifyMode::ResidualSplit => residual_split(cloud, id, cfg, rng)?,
            DensifyMode::BaselineSplitClone => baseline_densify(cloud, id, cfg, scene_extent, rng)?,
        };
        report.merge(step);
    }
    report.count_after = cloud.len();
    Ok(report)
}

/// Remove every Gaussian whose opacity is below `eps`.
pub fn prune(cloud: &mut GaussianCloud, eps: f64) -> DensifyReport {
    let mut report = DensifyReport::starting(cloud);
    let opacities: Vec<f64> = (0..cloud.len()).map(|i| cloud.opacity(i)).collect();
    report.pruned = cloud.retain_indices(|i| opacities[i] >= eps);
    report.count_after = cloud.len();
    report
}

/// Multiply every opacity by `factor` in activated space.
pub fn opacity_reduction(cloud: &mut GaussianCloud, factor: f64) {
    for i in 0..cloud.len() {
        let o = cloud.opacity(i);
        cloud.set_opacity(i, factor * o);
    }
}

/// 1.1 times the radius of the smallest centroid-centered sphere holding
/// every camera center.
pub fn scene_extent(cameras: &[Camera]) -> f64 {
    if cameras.is_empty() {
        return 1.0;
    }
    let centers: Vec<Vec3> = cameras.iter().map(Camera::center).collect();
    let mut centroid = [0.0; 3];
    for c in &centers {
        centroid = math::add(&centroid, c);
    }
    let centroid = math::scale(&centroid, 1.0 / centers.len() as f64);
    let radius = centers
        .iter()
        .map(|c| math::norm(&math::sub(c, &centroid)))
        .fold(0.0, f64::max);
    let radius = if radius > 0.0 { radius } else { 1.0 };
    1.1 * radius
}
