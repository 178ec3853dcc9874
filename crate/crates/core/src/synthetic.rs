//! Seeded synthetic scenes: random Gaussians in the unit box seen by a ring
//! of inward-looking cameras.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::init::ColoredPoint;
use crate::math;
use crate::model::{Camera, Gaussian, GaussianCloud};
use crate::raster::{render, RenderSettings};
use crate::sh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Ground-truth centers and colors with noise added.
    GroundtruthPerturbed,
    /// Uniform points in the box, random colors.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_gaussians: usize,
    pub n_views: usize,
    /// Square image edge in pixels.
    pub resolution: usize,
    pub seed: u64,
    pub init_mode: InitMode,
    /// Every `holdout_every`-th view (the last of each group) is held out;
    /// 0 keeps all views for training.
    pub holdout_every: usize,
    /// Ring radius.
    pub camera_distance: f64,
    /// Focal length as a multiple of the resolution.
    pub focal_factor: f64,
    /// Linear scale range of ground-truth Gaussians.
    pub scale_range: [f64; 2],
    pub opacity_range: [f64; 2],
    /// Number of points emitted for initialization; 0 means `n_gaussians`.
    pub init_points: usize,
    /// Standard deviation of the position noise for perturbed init.
    pub init_position_noise: f64,
    pub init_color_noise: f64,
    pub background: [f64; 3],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_gaussians: 64,
            n_views: 10,
            resolution: 128,
            seed: 0,
            init_mode: InitMode::GroundtruthPerturbed,
            holdout_every: 5,
            camera_distance: 2.5,
            focal_factor: 1.1,
            scale_range: [0.03, 0.12],
            opacity_range: [0.6, 0.95],
            init_points: 0,
            init_position_noise: 0.05,
            init_color_noise: 0.1,
            background: [0.0; 3],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.n_gaussians == 0 || self.n_views == 0 || self.resolution == 0 {
            return fail("synthetic scene needs gaussians, views and pixels");
        }
        if !(self.camera_distance > 1.0) {
            return fail("cameras must sit outside the unit box");
        }
        if !(self.focal_factor > 0.0) {
            return fail("focal_factor must be positive");
        }
        let [s0, s1] = self.scale_range;
        if !(s0 > 0.0 && s0 <= s1) {
            return fail("scale_range must be positive and ordered");
        }
        let [o0, o1] = self.opacity_range;
        if !(o0 > 0.0 && o0 <= o1 && o1 < 1.0) {
            return fail("opacity_range must lie in (0, 1) and be ordered");
        }
        if self.init_position_noise < 0.0 || self.init_color_noise < 0.0 {
            return fail("noise levels must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub ground_truth: GaussianCloud,
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub init_points: Vec<ColoredPoint>,
    pub background: [f64; 3],
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Inward-looking cameras on a ring around the origin. Elevation cycles
/// through -25, 0 and +25 degrees.
pub fn ring_cameras(n: usize, distance: f64, resolution: usize, focal_factor: f64) -> Vec<Camera> {
    let focal = focal_factor * resolution as f64;
    (0..n)
        .map(|i| {
            let azimuth = 2.0 * core::f64::consts::PI * i as f64 / n as f64;
            let elevation = [-25.0f64, 0.0, 25.0][i % 3].to_radians();
            let eye = [
                distance * libm::cos(elevation) * libm::cos(azimuth),
                distance * libm::cos(elevation) * libm::sin(azimuth),
                distance * libm::sin(elevation),
            ];
            Camera::look_at(
                eye,
                [0.0; 3],
                [0.0, 0.0, 1.0],
                focal,
                focal,
                resolution,
                resolution,
            )
        })
        .collect()
}

fn ground_truth<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<GaussianCloud> {
    let [s0, s1] = spec.scale_range;
    let [o0, o1] = spec.opacity_range;
    let gaussians: Vec<Gaussian> = (0..spec.n_gaussians)
        .map(|_| {
            let position = core::array::from_fn(|_| uniform(rng, -0.5, 0.5));
            let log_scale = core::array::from_fn(|_| uniform(rng, math::ln(s0), math::ln(s1)));
            let rotation = math::quat_normalize(&core::array::from_fn(|_| normal(rng)));
            let opacity = uniform(rng, o0, o1);
            let rgb: [f64; 3] = core::array::from_fn(|_| uniform(rng, 0.05, 0.95));
            Gaussian {
                position,
                log_scale,
                rotation,
                opacity_logit: math::logit(opacity),
                sh: rgb.iter().map(|&c| sh::rgb_to_dc(c)).collect(),
                level: 0,
            }
        })
        .collect();
    let n = gaussians.len() as u64;
    GaussianCloud::from_parts(0, gaussians, (0..n).collect(), n)
}

fn initial_points<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    gt: &GaussianCloud,
    rng: &mut R,
) -> Vec<ColoredPoint> {
    let count = if spec.init_points == 0 {
        spec.n_gaussians
    } else {
        spec.init_points
    };
    match spec.init_mode {
        InitMode::GroundtruthPerturbed => (0..count)
            .map(|k| {
                let i = k % gt.len();
                let p = gt.positions()[i];
                let base = sh::eval_sh_color(gt.sh_of(i), &[0.0, 0.0, 1.0], 0);
                let position =
                    core::array::from_fn(|a| p[a] + spec.init_position_noise * normal(rng));
                let rgb = core::array::from_fn(|c| {
                    (base[c] + spec.init_color_noise * normal(rng)).clamp(0.0, 1.0)
                });
                ColoredPoint { position, rgb }
            })
            .collect(),
        InitMode::Random => crate::init::random_points(count, [-0.5; 3], [0.5; 3], rng),
    }
}

/// Build the scene for `spec`. The same spec always gives the same scene.
pub fn make_scene(spec: &SyntheticSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ground_truth = ground_truth(spec, &mut rng)?;
    let init_points = initial_points(spec, &ground_truth, &mut rng);
    let cameras = ring_cameras(
        spec.n_views,
        spec.camera_distance,
        spec.resolution,
        spec.focal_factor,
    );
    let settings = RenderSettings::default();
    let images = cameras
        .iter()
        .map(|c| render(c, &ground_truth, spec.background, &settings).map(|o| o.image))
        .collect::<Result<Vec<_>>>()?;
    let (test, train): (Vec<usize>, Vec<usize>) = (0..spec.n_views)
        .partition(|&i| spec.holdout_every > 0 && i % spec.holdout_every == spec.holdout_every - 1);
    Ok(SyntheticScene {
        ground_truth,
        cameras,
        images,
        train,
        test,
        init_points,
        background: spec.background,
    })
}
