//! Initial clouds from point sets.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::model::{Gaussian, GaussianCloud};
use crate::sh;

pub const INITIAL_OPACITY: f64 = 0.1;
/// Scale used when a point has no neighbours.
pub const LONE_POINT_SCALE: f64 = 0.01;
const MIN_DISTANCE: f64 = 1e-7;

/// A colored point, RGB in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColoredPoint {
    pub position: Vec3,
    pub rgb: [f64; 3],
}

/// Mean distance from each point to its (up to) 3 nearest neighbours.
pub fn mean_neighbour_distance(points: &[Vec3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let mut best = [f64::INFINITY; 3];
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = math::norm(&math::sub(p, q));
            if d < best[2] {
                best[2] = d;
                best.sort_by(f64::total_cmp);
            }
        }
        let found: Vec<f64> = best.iter().copied().filter(|d| d.is_finite()).collect();
        let mean = if found.is_empty() {
            LONE_POINT_SCALE
        } else {
            found.iter().sum::<f64>() / found.len() as f64
        };
        out.push(mean.max(MIN_DISTANCE));
    }
    out
}

/// One isotropic Gaussian per point: scale from neighbour spacing, opacity
/// 0.1, base color from the point's RGB, higher SH bands zero.
pub fn cloud_from_points(points: &[ColoredPoint], sh_degree: usize) -> Result<GaussianCloud> {
    if sh_degree > sh::MAX_DEGREE {
        return Err(Error::InvalidParameter("SH degree must be 0..=3".into()));
    }
    let positions: Vec<Vec3> = points.iter().map(|p| p.position).collect();
    if positions.iter().any(|p| !math::is_finite3(p)) {
        return Err(Error::InvalidParameter("non-finite point position".into()));
    }
    let spacing = mean_neighbour_distance(&positions);
    let stride = 3 * sh::coeff_count(sh_degree);
    let gaussians: Vec<Gaussian> = points
        .iter()
        .zip(&spacing)
        .map(|(p, &d)| {
            let mut coeffs = vec![0.0; stride];
            for c in 0..3 {
                coeffs[c] = sh::rgb_to_dc(p.rgb[c]);
            }
            Gaussian {
                position: p.position,
                log_scale: [math::ln(d); 3],
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity_logit: math::logit(INITIAL_OPACITY),
                sh: coeffs,
                level: 0,
            }
        })
        .collect();
    let n = gaussians.len() as u64;
    GaussianCloud::from_parts(sh_degree, gaussians, (0..n).collect(), n)
}

/// `count` points uniform in the box `[lo, hi]` with uniform random colors.
pub fn random_points<R: Rng + ?Sized>(
    count: usize,
    lo: Vec3,
    hi: Vec3,
    rng: &mut R,
) -> Vec<ColoredPoint> {
    (0..count)
        .map(|_| {
            let position = core::array::from_fn(|a| lo[a] + (hi[a] - lo[a]) * rng.random::<f64>());
            let rgb = core::array::from_fn(|_| rng.random::<f64>());
            ColoredPoint { position, rgb }
        })
        .collect()
}
