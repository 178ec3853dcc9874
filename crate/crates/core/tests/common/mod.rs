//! Independent reference implementations used as test oracles. Nothing here
//! calls into the rasterizer or loss code under test.
#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use resgs_core::model::{Camera, Gaussian, GaussianCloud};
use resgs_core::Image;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn coeffs(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, degree: usize) -> Gaussian {
    Gaussian {
        position: [
            uniform(rng, -0.6, 0.6),
            uniform(rng, -0.6, 0.6),
            uniform(rng, -0.6, 0.6),
        ],
        log_scale: [0; 3].map(|_| uniform(rng, -3.2, -1.6)),
        rotation: [0; 4].map(|_| uniform(rng, -1.0, 1.0)),
        opacity_logit: uniform(rng, -2.0, 3.0),
        sh: (0..3 * coeffs(degree))
            .map(|k| {
                if k < 3 {
                    uniform(rng, -1.5, 1.5)
                } else {
                    uniform(rng, -0.4, 0.4)
                }
            })
            .collect(),
        level: 0,
    }
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, degree: usize) -> GaussianCloud {
    let mut cloud = GaussianCloud::new(degree);
    for _ in 0..n {
        cloud.push(random_gaussian(rng, degree)).unwrap();
    }
    cloud
}

pub fn camera(rng: &mut ChaCha8Rng, size: usize) -> Camera {
    let az = uniform(rng, 0.0, std::f64::consts::TAU);
    let el = uniform(rng, -0.5, 0.5);
    let d = 2.5;
    let eye = [
        d * el.cos() * az.cos(),
        d * el.cos() * az.sin(),
        d * el.sin(),
    ];
    let f = 1.1 * size as f64;
    Camera::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0], f, f, size, size)
}

fn quat(q: &[f64; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
}

/// `R S S^T R^T` via nalgebra's quaternion rotation.
pub fn covariance(g: &Gaussian) -> Matrix3<f64> {
    let r = quat(&g.rotation).to_rotation_matrix().into_inner();
    let s = Matrix3::from_diagonal(&Vector3::from(g.log_scale.map(f64::exp)));
    r * s * s.transpose() * r.transpose()
}

pub fn mat3(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

/// Real spherical harmonics, degree at most 1, with the +0.5 offset and
/// clamp at zero.
pub fn sh_color(sh: &[f64], degree: usize, dir: Vector3<f64>) -> [f64; 3] {
    const Y00: f64 = 0.282_094_791_773_878_14;
    const Y1: f64 = 0.488_602_511_902_919_9;
    let mut basis = vec![Y00];
    if degree >= 1 {
        basis.extend([-Y1 * dir.y, Y1 * dir.z, -Y1 * dir.x]);
    }
    assert!(degree <= 1, "oracle covers degree 0 and 1");
    let mut c = [0.5; 3];
    for (k, b) in basis.iter().enumerate() {
        for ch in 0..3 {
            c[ch] += sh[3 * k + ch] * b;
        }
    }
    c.map(|v| v.max(0.0))
}

/// Screen-space splat as the oracle sees it.
pub struct RefSplat {
    pub id: u64,
    pub depth: f64,
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    pub opacity: f64,
    pub color: [f64; 3],
}

/// EWA projection: `J W Σ W^T J^T + 0.3 I`.
pub fn project(cam: &Camera, g: &Gaussian, id: u64, degree: usize) -> Option<RefSplat> {
    let w = mat3(&cam.rotation);
    let t = Vector3::from(cam.translation);
    let x = Vector3::from(g.position);
    let p = w * x + t;
    if p.z <= cam.near_clip {
        return None;
    }
    let j = nalgebra::Matrix2x3::new(
        cam.fx / p.z,
        0.0,
        -cam.fx * p.x / (p.z * p.z),
        0.0,
        cam.fy / p.z,
        -cam.fy * p.y / (p.z * p.z),
    );
    let cov = j * w * covariance(g) * w.transpose() * j.transpose() + Matrix2::identity() * 0.3;
    let center = -w.transpose() * t;
    let dir = (x - center).normalize();
    Some(RefSplat {
        id,
        depth: p.z,
        mean: Vector2::new(cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy),
        cov,
        opacity: 1.0 / (1.0 + (-g.opacity_logit).exp()),
        color: sh_color(&g.sh, degree, dir),
    })
}

/// Front-to-back blending sum over every splat at every pixel, no cutoff
/// and no early termination. Returns the image and final transmittance.
pub fn brute_force_render(cam: &Camera, cloud: &GaussianCloud, bg: [f64; 3]) -> (Image, Vec<f64>) {
    let mut splats: Vec<RefSplat> = (0..cloud.len())
        .filter_map(|i| project(cam, &cloud.get(i), cloud.ids()[i], cloud.sh_degree()))
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.id.cmp(&b.id)));
    let inverses: Vec<Matrix2<f64>> = splats
        .iter()
        .map(|s| s.cov.try_inverse().unwrap())
        .collect();
    let mut img = Image::new(cam.width, cam.height);
    let mut trans = Vec::with_capacity(cam.width * cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let px = Vector2::new(x as f64, y as f64);
            let mut c = [0.0; 3];
            let mut t = 1.0;
            for (s, inv) in splats.iter().zip(&inverses) {
                let d = px - s.mean;
                let g = (-0.5 * (d.transpose() * inv * d)[(0, 0)]).exp();
                let a = (s.opacity * g).min(0.999);
                for ch in 0..3 {
                    c[ch] += s.color[ch] * a * t;
                }
                t *= 1.0 - a;
            }
            img.set(x, y, [0, 1, 2].map(|ch| c[ch] + t * bg[ch]));
            trans.push(t);
        }
    }
    (img, trans)
}

/// SSIM by direct double loop over every valid window position.
pub fn naive_ssim(a: &Image, b: &Image, window: usize, sigma: f64) -> f64 {
    let half = (window / 2) as f64;
    let mut w = vec![0.0; window * window];
    for i in 0..window {
        for j in 0..window {
            let (di, dj) = (i as f64 - half, j as f64 - half);
            w[i * window + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (width, height) = a.dims();
    let mut sum = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        for y0 in 0..=height - window {
            for x0 in 0..=width - window {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..window {
                    for j in 0..window {
                        let wt = w[i * window + j];
                        let pa = a.get(x0 + j, y0 + i)[ch];
                        let pb = b.get(x0 + j, y0 + i)[ch];
                        ma += wt * pa;
                        mb += wt * pb;
                        saa += wt * pa * pa;
                        sbb += wt * pb * pb;
                        sab += wt * pa * pb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    sum / count as f64
}

/// Mean of each 2x2 block, clamping indices at the last row and column.
pub fn block_mean(img: &Image) -> Image {
    let (w, h) = img.dims();
    let (ow, oh) = ((w / 2).max(1), (h / 2).max(1));
    let mut out = Image::new(ow, oh);
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = [0.0; 3];
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let p = img.get((2 * x + dx).min(w - 1), (2 * y + dy).min(h - 1));
                for ch in 0..3 {
                    acc[ch] += p[ch];
                }
            }
            out.set(x, y, acc.map(|v| v / 4.0));
        }
    }
    out
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::from_data(w, h, (0..w * h * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
}
