//! Gaussian scene parameterization: storage, covariance, evaluation and
//! sampling.
//!
//! Scales are stored as logarithms and opacities as logits so that any
//! unconstrained optimizer step keeps them in their valid domains. The cloud
//! is kept sorted by ascending id: new Gaussians are appended with fresh,
//! monotonically increasing ids and removal preserves order.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Quat, Vec3};
use crate::sh;

/// Largest accepted covariance condition number.
pub const MAX_CONDITION: f64 = 1e12;

/// One Gaussian in owned form, used when inserting or inspecting.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub position: Vec3,
    pub log_scale: Vec3,
    pub rotation: Quat,
    pub opacity_logit: f64,
    /// `[coefficient][channel]`, length `3 * coeff_count(degree)`.
    pub sh: Vec<f64>,
    pub level: u32,
}

impl Gaussian {
    pub fn opacity(&self) -> f64 {
        math::sigmoid(self.opacity_logit)
    }

    pub fn scales(&self) -> Vec3 {
        self.log_scale.map(math::exp)
    }
}

/// Structure-of-arrays storage of every trainable Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    sh_degree: usize,
    positions: Vec<Vec3>,
    log_scales: Vec<Vec3>,
    rotations: Vec<Quat>,
    opacity_logits: Vec<f64>,
    sh: Vec<f64>,
    levels: Vec<u32>,
    ids: Vec<u64>,
    next_id: u64,
    generation: u64,
}

macro_rules! field_access {
    ($get:ident, $get_mut:ident, $field:ident, $ty:ty) => {
        pub fn $get(&self) -> &[$ty] {
            &self.$field
        }

        /// Mutable view; marks the cloud as modified.
        pub fn $get_mut(&mut self) -> &mut [$ty] {
            self.generation += 1;
            &mut self.$field
        }
    };
}

impl GaussianCloud {
    pub fn new(sh_degree: usize) -> Self {
        assert!(sh_degree <= sh::MAX_DEGREE, "SH degree must be 0..=3");
        Self {
            sh_degree,
            positions: Vec::new(),
            log_scales: Vec::new(),
            rotations: Vec::new(),
            opacity_logits: Vec::new(),
            sh: Vec::new(),
            levels: Vec::new(),
            ids: Vec::new(),
            next_id: 0,
            generation: 0,
        }
    }

    /// Rebuild a cloud with explicit ids, e.g. from a checkpoint. Ids must be
    /// strictly increasing; `next_id` must exceed all of them.
    pub fn from_parts(
        sh_degree: usize,
        gaussians: Vec<Gaussian>,
        ids: Vec<u64>,
        next_id: u64,
    ) -> Result<Self> {
        if sh_degree > sh::MAX_DEGREE {
            return Err(Error::Config(alloc::format!("SH degree {sh_degree} > 3")));
        }
        if gaussians.len() != ids.len() {
            return Err(Error::Shape(alloc::format!(
                "{} gaussians but {} ids",
                gaussians.len(),
                ids.len()
            )));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("ids must be strictly increasing".into()));
        }
        if ids.last().is_some_and(|&last| last >= next_id) {
            return Err(Error::Config("next_id must exceed every id".into()));
        }
        let mut cloud = Self::new(sh_degree);
        for g in gaussians {
            cloud.push_raw(g)?;
        }
        cloud.ids = ids;
        cloud.next_id = next_id;
        Ok(cloud)
    }

    fn push_raw(&mut self, g: Gaussian) -> Result<()> {
        if g.sh.len() != self.sh_stride() {
            return Err(Error::Shape(alloc::format!(
                "expected {} SH values, got {}",
                self.sh_stride(),
                g.sh.len()
            )));
        }
        self.positions.push(g.position);
        self.log_scales.push(g.log_scale);
        self.rotations.push(g.rotation);
        self.opacity_logits.push(g.opacity_logit);
        self.sh.extend_from_slice(&g.sh);
        self.levels.push(g.level);
        Ok(())
    }

    /// Append a Gaussian with a fresh id and return the id.
    pub fn push(&mut self, g: Gaussian) -> Result<u64> {
        self.push_raw(g)?;
        let id = self.next_id;
        self.ids.push(id);
        self.next_id += 1;
        self.generation += 1;
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn sh_degree(&self) -> usize {
        self.sh_degree
    }

    /// SH values per Gaussian (three channels).
    pub fn sh_stride(&self) -> usize {
        3 * sh::coeff_count(self.sh_degree)
    }

    /// Monotone counter bumped by every mutation.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn get(&self, index: usize) -> Gaussian {
        Gaussian {
            position: self.positions[index],
            log_scale: self.log_scales[index],
            rotation: self.rotations[index],
            opacity_logit: self.opacity_logits[index],
            sh: self.sh_of(index).to_vec(),
            level: self.levels[index],
        }
    }

    field_access!(positions, positions_mut, positions, Vec3);
    field_access!(log_scales, log_scales_mut, log_scales, Vec3);
    field_access!(rotations, rotations_mut, rotations, Quat);
    field_access!(opacity_logits, opacity_logits_mut, opacity_logits, f64);
    field_access!(sh, sh_mut, sh, f64);

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn sh_of(&self, index: usize) -> &[f64] {
        let s = self.sh_stride();
        &self.sh[index * s..(index + 1) * s]
    }

    pub fn opacity(&self, index: usize) -> f64 {
        math::sigmoid(self.opacity_logits[index])
    }

    /// Set an activated opacity, re-encoding it as a logit.
    pub fn set_opacity(&mut self, index: usize, opacity: f64) {
        self.opacity_logits[index] = math::logit(opacity);
        self.generation += 1;
    }

    /// Remove the Gaussian at `index`, preserving order of the rest.
    pub fn remove(&mut self, index: usize) -> u64 {
        let s = self.sh_stride();
        self.positions.remove(index);
        self.log_scales.remove(index);
        self.rotations.remove(index);
        self.opacity_logits.remove(index);
        self.sh.drain(index * s..(index + 1) * s);
        self.levels.remove(index);
        self.generation += 1;
        self.ids.remove(index)
    }

    /// Keep only Gaussians for which `keep(index)` holds; returns removed ids.
    pub fn retain_indices(&mut self, mut keep: impl FnMut(usize) -> bool) -> Vec<u64> {
        let mask: Vec<bool> = (0..self.len()).map(&mut keep).collect();
        let removed = self
            .ids
            .iter()
            .zip(&mask)
            .filter(|(_, k)| !**k)
            .map(|(id, _)| *id)
            .collect::<Vec<_>>();
        if removed.is_empty() {
            return removed;
        }
        fn filter<T: Copy>(v: &mut Vec<T>, mask: &[bool]) {
            let mut i = 0;
            v.retain(|_| {
                let k = mask[i];
                i += 1;
                k
            });
        }
        filter(&mut self.positions, &mask);
        filter(&mut self.log_scales, &mask);
        filter(&mut self.rotations, &mask);
        filter(&mut self.opacity_logits, &mask);
        filter(&mut self.levels, &mask);
        filter(&mut self.ids, &mask);
        let s = self.sh_stride();
        let mut sh = Vec::with_capacity(self.ids.len() * s);
        for (i, k) in mask.iter().enumerate() {
            if *k {
                sh.extend_from_slice(&self.sh[i * s..(i + 1) * s]);
            }
        }
        self.sh = sh;
        self.generation += 1;
        removed
    }

    /// Renormalize every quaternion to unit length.
    pub fn normalize_rotations(&mut self) {
        for q in &mut self.rotations {
            *q = math::quat_normalize(q);
        }
        self.generation += 1;
    }

    /// Count of Gaussians per level, index = level.
    pub fn level_histogram(&self) -> Vec<usize> {
        let max = self.levels.iter().copied().max().unwrap_or(0) as usize;
        let mut hist = alloc::vec![0usize; if self.is_empty() { 0 } else { max + 1 }];
        for &l in &self.levels {
            hist[l as usize] += 1;
        }
        hist
    }

    pub fn max_level(&self) -> u32 {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    /// First id/field pair holding a non-finite value.
    pub fn find_non_finite(&self) -> Option<(u64, &'static str)> {
        for i in 0..self.len() {
            let id = self.ids[i];
            if !math::is_finite3(&self.positions[i]) {
                return Some((id, "position"));
            }
            if !math::is_finite3(&self.log_scales[i]) {
                return Some((id, "log_scale"));
            }
            if !self.rotations[i].iter().all(|v| v.is_finite()) {
                return Some((id, "rotation"));
            }
            if !self.opacity_logits[i].is_finite() {
                return Some((id, "opacity_logit"));
            }
            if !self.sh_of(i).iter().all(|v| v.is_finite()) {
                return Some((id, "sh"));
            }
        }
        None
    }
}

/// Pinhole camera with world-to-camera extrinsics. Camera space looks down
/// `+z` with `y` pointing down; pixel centers sit at integer coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: Mat3,
    pub translation: Vec3,
    #[serde(default = "default_near_clip")]
    pub near_clip: f64,
}

fn default_near_clip() -> f64 {
    0.01
}

impl Camera {
    /// Camera at `eye` looking at `target`, with `up` giving the world up
    /// direction.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let fwd = math::sub(&target, &eye);
        let z = math::scale(&fwd, 1.0 / math::norm(&fwd));
        let up_ortho = math::sub(&up, &math::scale(&z, math::dot(&up, &z)));
        let y = math::scale(&up_ortho, -1.0 / math::norm(&up_ortho));
        let x = [
            y[1] * z[2] - y[2] * z[1],
            y[2] * z[0] - y[0] * z[2],
            y[0] * z[1] - y[1] * z[0],
        ];
        let rotation = [x, y, z];
        let t = math::mat_vec(&rotation, &eye);
        Self {
            fx,
            fy,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
            rotation,
            translation: [-t[0], -t[1], -t[2]],
            near_clip: default_near_clip(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.near_clip]
            .iter()
            .chain(self.translation.iter())
            .chain(self.rotation.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(
                "camera has non-finite fields".into(),
            ));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidParameter(
                "focal lengths must be positive".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter(
                "image size must be at least 1x1".into(),
            ));
        }
        if self.near_clip <= 0.0 {
            return Err(Error::InvalidParameter("near_clip must be positive".into()));
        }
        let rrt = math::mat_mul_bt(&self.rotation, &self.rotation);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                if (rrt[i][j] - e).abs() > 1e-8 {
                    return Err(Error::InvalidParameter(
                        "rotation is not orthonormal".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        let t = math::mat_t_vec(&self.rotation, &self.translation);
        [-t[0], -t[1], -t[2]]
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        math::add(&math::mat_vec(&self.rotation, p), &self.translation)
    }

    /// Same pose for an image resampled by `factor` (0.5 = every 2x2 block
    /// averaged). Pixel centers sit at integer coordinates, so the principal
    /// point shifts as well as scales.
    pub fn with_resolution(&self, width: usize, height: usize, factor: f64) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: (self.cx + 0.5) * factor - 0.5,
            cy: (self.cy + 0.5) * factor - 0.5,
            width,
            height,
            ..self.clone()
        }
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!(
            "{what} is not finite"
        )))
    }
}

/// `R S` for a rotation quaternion and log-scales.
pub fn rotation_scale(log_scale: &Vec3, rotation: &Quat) -> Mat3 {
    let r = math::quat_to_mat(&math::quat_normalize(rotation));
    let s = log_scale.map(math::exp);
    let mut m = r;
    for row in m.iter_mut() {
        for (v, sk) in row.iter_mut().zip(&s) {
            *v *= sk;
        }
    }
    m
}

/// Covariance `R S S^T R^T` with `S = diag(exp(log_scale))`.
pub fn build_covariance(log_scale: &Vec3, rotation: &Quat) -> Result<Mat3> {
    check_finite(log_scale, "log_scale")?;
    check_finite(rotation, "rotation")?;
    if math::quat_norm(rotation) == 0.0 {
        return Err(Error::InvalidParameter("zero quaternion".into()));
    }
    let m = rotation_scale(log_scale, rotation);
    let mut cov = math::mat_mul_bt(&m, &m);
    // exact symmetry
    for i in 0..3 {
        for j in (i + 1)..3 {
            let v = 0.5 * (cov[i][j] + cov[j][i]);
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    Ok(cov)
}

/// Unnormalized Gaussian density `exp(-0.5 d^T cov^-1 d)` at `x`.
pub fn eval_gaussian(mean: &Vec3, cov: &Mat3, x: &Vec3) -> Result<f64> {
    let ev = math::symmetric_eigenvalues(cov);
    if !(ev[0] > 0.0) || ev[2] / ev[0] > MAX_CONDITION {
        return Err(Error::DegenerateCovariance {
            condition: if ev[0] > 0.0 {
                ev[2] / ev[0]
            } else {
                f64::INFINITY
            },
        });
    }
    let inv = math::inverse(cov).ok_or(Error::DegenerateCovariance {
        condition: f64::INFINITY,
    })?;
    let d = math::sub(x, mean);
    let q = math::dot(&d, &math::mat_vec(&inv, &d));
    Ok(math::exp(-0.5 * q.max(0.0)))
}

/// Draw a point from `N(mean, R S S^T R^T)`: `mean + R S z`, `z ~ N(0, I)`,
/// consuming exactly three standard normals from `rng`.
pub fn sample_position<R: Rng + ?Sized>(
    mean: &Vec3,
    log_scale: &Vec3,
    rotation: &Quat,
    rng: &mut R,
) -> Vec3 {
    let z: Vec3 = [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ];
    math::add(
        mean,
        &math::mat_vec(&rotation_scale(log_scale, rotation), &z),
    )
}
