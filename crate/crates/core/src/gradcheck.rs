//! Central finite-difference check of [`crate::raster::backward`].
//!
//! The scalar under test is a fixed random linear functional of the rendered
//! image, `f = sum_p w_p C_p`, so `dL/dC = w`. Rendering uses
//! [`RenderSettings::exact`], which is smooth in every parameter.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::Image;
use crate::math;
use crate::model::{Camera, Gaussian, GaussianCloud};
use crate::raster::{backward, render, RenderSettings};
use crate::sh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-5,
            abs_tol: 1e-8,
        }
    }
}

/// Worst component seen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub scene: usize,
    pub id: u64,
    pub group: &'static str,
    pub component: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub scenes: usize,
    pub components: usize,
    /// Largest relative error among components whose absolute error exceeds
    /// the absolute tolerance.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub failures: usize,
    pub worst: Option<Mismatch>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn merge(&mut self, other: GradcheckReport) {
        self.scenes += other.scenes;
        self.components += other.components;
        self.failures += other.failures;
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

/// A small smooth test scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: GaussianCloud,
    pub camera: Camera,
    pub background: [f64; 3],
    pub weights: Image,
}

/// Random scene with `n` Gaussians, a `size x size` camera and SH `degree`.
pub fn random_scene<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    size: usize,
    degree: usize,
) -> Result<Scene> {
    let stride = 3 * sh::coeff_count(degree);
    let gaussians: Vec<Gaussian> = (0..n)
        .map(|_| {
            let mut coeffs: Vec<f64> = (0..stride).map(|_| rng.random_range(-0.1..0.1)).collect();
            for c in coeffs.iter_mut().take(3) {
                *c = sh::rgb_to_dc(rng.random_range(0.3..0.8));
            }
            Gaussian {
                position: core::array::from_fn(|_| rng.random_range(-0.4..0.4)),
                log_scale: core::array::from_fn(|_| math::ln(rng.random_range(0.08..0.3))),
                rotation: core::array::from_fn(|_| rng.random_range(-1.0..1.0)),
                opacity_logit: math::logit(rng.random_range(0.2..0.8)),
                sh: coeffs,
                level: 0,
            }
        })
        .collect();
    let cloud = GaussianCloud::from_parts(degree, gaussians, (0..n as u64).collect(), n as u64)?;
    let azimuth = rng.random_range(0.0..core::f64::consts::TAU);
    let eye = [
        2.5 * libm::cos(azimuth),
        2.5 * libm::sin(azimuth),
        rng.random_range(-0.8..0.8),
    ];
    let focal = 1.2 * size as f64;
    let camera = Camera::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0], focal, focal, size, size);
    let background = core::array::from_fn(|_| rng.random_range(0.0..1.0));
    let weights = Image::from_data(
        size,
        size,
        (0..size * size * 3)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )?;
    Ok(Scene {
        cloud,
        camera,
        background,
        weights,
    })
}

fn functional(scene: &Scene, cloud: &GaussianCloud) -> Result<f64> {
    let out = render(
        &scene.camera,
        cloud,
        scene.background,
        &RenderSettings::exact(),
    )?;
    Ok(out
        .image
        .data()
        .iter()
        .zip(scene.weights.data())
        .map(|(c, w)| c * w)
        .sum())
}

#[derive(Clone, Copy)]
enum Group {
    Position,
    LogScale,
    Rotation,
    Opacity,
    Sh,
}

impl Group {
    fn name(self) -> &'static str {
        match self {
            Group::Position => "position",
            Group::LogScale => "log_scale",
            Group::Rotation => "rotation",
            Group::Opacity => "opacity_logit",
            Group::Sh => "sh",
        }
    }
}

fn nudge(cloud: &mut GaussianCloud, group: Group, i: usize, k: usize, delta: f64) {
    match group {
        Group::Position => cloud.positions_mut()[i][k] += delta,
        Group::LogScale => cloud.log_scales_mut()[i][k] += delta,
        Group::Rotation => cloud.rotations_mut()[i][k] += delta,
        Group::Opacity => cloud.opacity_logits_mut()[i] += delta,
        Group::Sh => {
            let stride = cloud.sh_stride();
            cloud.sh_mut()[i * stride + k] += delta;
        }
    }
}

/// Compare analytic and numeric gradients for every parameter of `scene`.
pub fn check_scene(scene: &Scene, index: usize, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let cloud = &scene.cloud;
    let out = render(
        &scene.camera,
        cloud,
        scene.background,
        &RenderSettings::exact(),
    )?;
    let grads = backward(&out, &scene.camera, cloud, &scene.weights)?.grads;
    let mut report = GradcheckReport {
        scenes: 1,
        ..Default::default()
    };
    let stride = cloud.sh_stride();
    for i in 0..cloud.len() {
        let groups: [(Group, usize); 5] = [
            (Group::Position, 3),
            (Group::LogScale, 3),
            (Group::Rotation, 4),
            (Group::Opacity, 1),
            (Group::Sh, stride),
        ];
        for (group, dims) in groups {
            for k in 0..dims {
                let analytic = match group {
                    Group::Position => grads.position[i][k],
                    Group::LogScale => grads.log_scale[i][k],
                    Group::Rotation => grads.rotation[i][k],
                    Group::Opacity => grads.opacity_logit[i],
                    Group::Sh => grads.sh[i * stride + k],
                };
                let mut plus = cloud.clone();
                nudge(&mut plus, group, i, k, cfg.step);
                let mut minus = cloud.clone();
                nudge(&mut minus, group, i, k, -cfg.step);
                let numeric =
                    (functional(scene, &plus)? - functional(scene, &minus)?) / (2.0 * cfg.step);
                let abs = (analytic - numeric).abs();
                report.components += 1;
                report.max_abs_error = report.max_abs_error.max(abs);
                if abs <= cfg.abs_tol {
                    continue;
                }
                let rel = abs / analytic.abs().max(numeric.abs());
                if rel > cfg.rel_tol {
                    report.failures += 1;
                }
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = Some(Mismatch {
                        scene: index,
                        id: cloud.ids()[i],
                        group: group.name(),
                        component: k,
                        analytic,
                        numeric,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Check `scenes` random scenes drawn from `seed`: up to 10 Gaussians,
/// up to 32x32 pixels, SH degree alternating between 0 and 1.
pub fn run_suite(seed: u64, scenes: usize, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = GradcheckReport::default();
    for s in 0..scenes {
        let n = rng.random_range(1..=10);
        let size = rng.random_range(12..=32);
        let scene = random_scene(&mut rng, n, size, s % 2)?;
        total.merge(check_scene(&scene, s, cfg)?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_scene_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scene = random_scene(&mut rng, 3, 12, 1).unwrap();
        let r = check_scene(&scene, 0, &GradcheckConfig::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.components, 3 * (11 + 12));
    }
}
