//! Adam with one learning rate per parameter group.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::model::GaussianCloud;
use crate::raster::CloudGrads;

/// Base learning rates. The position rate decays log-linearly from
/// `position_init` to `position_final` and is multiplied by the scene
/// extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub position_init: f64,
    pub position_final: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position_init: 1.6e-4,
            position_final: 1.6e-6,
            sh_dc: 2.5e-3,
            sh_rest: 2.5e-3 / 20.0,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
        }
    }
}

impl LearningRates {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.position_init,
            self.position_final,
            self.sh_dc,
            self.sh_rest,
            self.opacity,
            self.scale,
            self.rotation,
        ];
        if all.iter().all(|r| r.is_finite() && *r > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("learning rates must be positive".into()))
        }
    }

    /// Position rate at `iteration` of `total`, before extent scaling.
    pub fn position_at(&self, iteration: usize, total: usize) -> f64 {
        let t = if total == 0 {
            1.0
        } else {
            (iteration as f64 / total as f64).clamp(0.0, 1.0)
        };
        math::exp(math::ln(self.position_init) * (1.0 - t) + math::ln(self.position_final) * t)
    }

    /// Every group's rate for one step.
    pub fn at(&self, iteration: usize, total: usize, position_scale: f64) -> GroupRates {
        GroupRates {
            position: self.position_at(iteration, total) * position_scale,
            log_scale: self.scale,
            rotation: self.rotation,
            opacity_logit: self.opacity,
            sh_dc: self.sh_dc,
            sh_rest: self.sh_rest,
        }
    }
}

/// Resolved learning rates for a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRates {
    pub position: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity_logit: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok =
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "adam betas must lie in [0, 1) and eps be positive".into(),
            ))
        }
    }
}

// Row layout per Gaussian: position 0..3, log-scale 3..6, rotation 6..10,
// opacity 10, then the SH coefficients.
const SH_OFFSET: usize = 11;

/// First and second moments, one row per Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    cfg: AdamConfig,
    sh_stride: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, len: usize, sh_stride: usize) -> Self {
        let row = SH_OFFSET + sh_stride;
        Self {
            cfg,
            sh_stride,
            m: vec![0.0; len * row],
            v: vec![0.0; len * row],
            step: 0,
        }
    }

    fn row(&self) -> usize {
        SH_OFFSET + self.sh_stride
    }

    pub fn len(&self) -> usize {
        self.m.len() / self.row()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Moments of Gaussian `index` in row layout.
    pub fn moments(&self, index: usize) -> (&[f64], &[f64]) {
        let r = self.row();
        (
            &self.m[index * r..(index + 1) * r],
            &self.v[index * r..(index + 1) * r],
        )
    }

    /// Apply one update. Gaussians with any non-finite gradient are left
    /// untouched; their ids are returned.
    pub fn step(
        &mut self,
        cloud: &mut GaussianCloud,
        grads: &CloudGrads,
        rates: &GroupRates,
    ) -> Result<Vec<u64>> {
        let n = cloud.len();
        if self.len() != n || grads.len() != n || cloud.sh_stride() != self.sh_stride {
            return Err(Error::Shape(alloc::format!(
                "optimizer holds {} rows, cloud {} gaussians, gradients {}",
                self.len(),
                n,
                grads.len()
            )));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - math::powf(beta1, self.step as f64);
        let bc2 = 1.0 - math::powf(beta2, self.step as f64);
        let row = self.row();
        let stride = self.sh_stride;

        let mut skipped = Vec::new();
        let mut g = vec![0.0; row];
        let mut lr = vec![0.0; row];
        for (k, r) in lr.iter_mut().enumerate() {
            *r = match k {
                0..=2 => rates.position,
                3..=5 => rates.log_scale,
                6..=9 => rates.rotation,
                10 => rates.opacity_logit,
                k if k < SH_OFFSET + 3 => rates.sh_dc,
                _ => rates.sh_rest,
            };
        }
        let mut delta = vec![0.0; n * row];
        for i in 0..n {
            g[0..3].copy_from_slice(&grads.position[i]);
            g[3..6].copy_from_slice(&grads.log_scale[i]);
            g[6..10].copy_from_slice(&grads.rotation[i]);
            g[10] = grads.opacity_logit[i];
            g[SH_OFFSET..].copy_from_slice(&grads.sh[i * stride..(i + 1) * stride]);
            if g.iter().any(|x| !x.is_finite()) {
                skipped.push(cloud.ids()[i]);
                continue;
            }
            let m = &mut self.m[i * row..(i + 1) * row];
            let v = &mut self.v[i * row..(i + 1) * row];
            let d = &mut delta[i * row..(i + 1) * row];
            for k in 0..row {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                d[k] = -lr[k] * m_hat / (math::sqrt(v_hat) + eps);
            }
        }

        for (i, p) in cloud.positions_mut().iter_mut().enumerate() {
            for (c, x) in p.iter_mut().enumerate() {
                *x += delta[i * row + c];
            }
        }
        for (i, s) in cloud.log_scales_mut().iter_mut().enumerate() {
            for (c, x) in s.iter_mut().enumerate() {
                *x += delta[i * row + 3 + c];
            }
        }
        for (i, q) in cloud.rotations_mut().iter_mut().enumerate() {
            for (c, x) in q.iter_mut().enumerate() {
                *x += delta[i * row + 6 + c];
            }
        }
        for (i, o) in cloud.opacity_logits_mut().iter_mut().enumerate() {
            *o += delta[i * row + 10];
        }
        for (j, x) in cloud.sh_mut().iter_mut().enumerate() {
            let (i, k) = (j / stride, j % stride);
            *x += delta[i * row + SH_OFFSET + k];
        }
        Ok(skipped)
    }

    /// Re-align to a new cloud layout; `mapping[new] = Some(old)` keeps the
    /// moments, `None` starts from zero.
    pub fn remap(&mut self, mapping: &[Option<usize>]) {
        let row = self.row();
        let mut m = vec![0.0; mapping.len() * row];
        let mut v = vec![0.0; mapping.len() * row];
        for (new, old) in mapping.iter().enumerate() {
            if let Some(old) = *old {
                m[new * row..(new + 1) * row].copy_from_slice(&self.m[old * row..(old + 1) * row]);
                v[new * row..(new + 1) * row].copy_from_slice(&self.v[old * row..(old + 1) * row]);
            }
        }
        self.m = m;
        self.v = v;
    }
}

/// For two ascending id lists, `mapping[new] = Some(old)` where the id
/// survives and `None` for ids only in `new_ids`.
pub fn id_mapping(old_ids: &[u64], new_ids: &[u64]) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(new_ids.len());
    let mut j = 0;
    for &id in new_ids {
        while j < old_ids.len() && old_ids[j] < id {
            j += 1;
        }
        if j < old_ids.len() && old_ids[j] == id {
            out.push(Some(j));
        } else {
            out.push(None);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Gaussian;

    fn one(sh_degree: usize) -> GaussianCloud {
        let stride = 3 * crate::sh::coeff_count(sh_degree);
        let g = Gaussian {
            position: [0.0, 1.0, 2.0],
            log_scale: [-1.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: 0.0,
            sh: vec![0.5; stride],
            level: 0,
        };
        GaussianCloud::from_parts(sh_degree, vec![g], vec![0], 1).unwrap()
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut cloud = one(1);
        let before = cloud.clone();
        let mut adam = Adam::new(AdamConfig::default(), 1, cloud.sh_stride());
        let grads = CloudGrads::zeros(1, cloud.sh_stride());
        let rates = LearningRates::default().at(0, 10, 1.0);
        adam.step(&mut cloud, &grads, &rates).unwrap();
        assert_eq!(cloud.get(0), before.get(0));
    }

    #[test]
    fn constant_gradient_steps_by_lr() {
        let mut cloud = one(0);
        let mut adam = Adam::new(AdamConfig::default(), 1, cloud.sh_stride());
        let mut grads = CloudGrads::zeros(1, cloud.sh_stride());
        grads.opacity_logit[0] = -0.37;
        let rates = GroupRates {
            position: 1e-3,
            log_scale: 1e-3,
            rotation: 1e-3,
            opacity_logit: 1e-2,
            sh_dc: 1e-3,
            sh_rest: 1e-3,
        };
        let mut last = cloud.opacity_logits()[0];
        let mut step = 0.0;
        for _ in 0..5000 {
            adam.step(&mut cloud, &grads, &rates).unwrap();
            step = cloud.opacity_logits()[0] - last;
            last = cloud.opacity_logits()[0];
        }
        assert!((step - 1e-2).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let mut cloud = one(0);
        let before = cloud.get(0);
        let mut adam = Adam::new(AdamConfig::default(), 1, cloud.sh_stride());
        let mut grads = CloudGrads::zeros(1, cloud.sh_stride());
        grads.position[0][1] = f64::NAN;
        grads.log_scale[0][0] = 1.0;
        let rates = LearningRates::default().at(0, 10, 1.0);
        let skipped = adam.step(&mut cloud, &grads, &rates).unwrap();
        assert_eq!(skipped, vec![0]);
        assert_eq!(cloud.get(0), before);
        assert!(adam.moments(0).0.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn position_schedule_endpoints() {
        let lr = LearningRates::default();
        assert!((lr.position_at(0, 3000) - 1.6e-4).abs() < 1e-9);
        assert!((lr.position_at(3000, 3000) - 1.6e-6).abs() < 1e-9);
        let mid = lr.position_at(1500, 3000);
        assert!((mid - libm::sqrt(1.6e-4 * 1.6e-6)).abs() < 1e-12);
    }

    #[test]
    fn mapping_merges_sorted_ids() {
        assert_eq!(
            id_mapping(&[0, 2, 3, 7], &[0, 3, 7, 8, 9]),
            vec![Some(0), Some(2), Some(3), None, None]
        );
    }
}
