//! Photometric loss `(1 - λ) L1 + λ (1 - SSIM) / 2` with its analytic image
//! gradient, plus the PSNR and SSIM evaluation metrics.
//!
//! SSIM uses a normalized Gaussian window evaluated only where the window
//! fits entirely inside the image (valid correlation), per channel, then
//! averaged over positions and channels.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math;

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_dssim: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_dssim: 0.2,
            ssim_window: 11,
            ssim_sigma: 1.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(Error::Config("lambda_dssim must lie in [0, 1]".into()));
        }
        if self.ssim_window < 3 || self.ssim_window % 2 == 0 {
            return Err(Error::Config(
                "ssim_window must be odd and at least 3".into(),
            ));
        }
        if !(self.ssim_sigma > 0.0) {
            return Err(Error::Config("ssim_sigma must be positive".into()));
        }
        Ok(())
    }

    /// Copy whose SSIM window fits a `width x height` image: the window
    /// shrinks to the largest odd size that fits, and the SSIM term is
    /// dropped below 3 pixels.
    pub fn fit_to(&self, width: usize, height: usize) -> LossConfig {
        let edge = width.min(height);
        if edge >= self.ssim_window {
            return *self;
        }
        if edge < 3 {
            return LossConfig {
                lambda_dssim: 0.0,
                ..*self
            };
        }
        LossConfig {
            ssim_window: if edge % 2 == 1 { edge } else { edge - 1 },
            ..*self
        }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            math::exp(-(d * d) / (2.0 * sigma * sigma))
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Separable valid correlation of a `w x h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, win: &[f64]) -> Vec<f64> {
    let n = win.len();
    let vw = w - n + 1;
    let vh = h - n + 1;
    let mut tmp = vec![0.0; vw * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        let dst = &mut tmp[y * vw..(y + 1) * vw];
        for (k, wk) in win.iter().enumerate() {
            for (d, s) in dst.iter_mut().zip(&row[k..k + vw]) {
                *d += wk * s;
            }
        }
    }
    let mut out = vec![0.0; vw * vh];
    for y in 0..vh {
        for (k, wk) in win.iter().enumerate() {
            let src = &tmp[(y + k) * vw..(y + k + 1) * vw];
            let dst = &mut out[y * vw..(y + 1) * vw];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wk * s;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a valid-sized map back to `w x h`.
fn filter_valid_adjoint(grad: &[f64], w: usize, h: usize, win: &[f64]) -> Vec<f64> {
    let n = win.len();
    let vw = w - n + 1;
    let vh = h - n + 1;
    let mut tmp = vec![0.0; vw * h];
    for y in 0..vh {
        for (k, wk) in win.iter().enumerate() {
            let src = &grad[y * vw..(y + 1) * vw];
            let dst = &mut tmp[(y + k) * vw..(y + k + 1) * vw];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wk * s;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let src = &tmp[y * vw..(y + 1) * vw];
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, wk) in win.iter().enumerate() {
            for (d, s) in dst[k..k + vw].iter_mut().zip(src) {
                *d += wk * s;
            }
        }
    }
    out
}

fn channel_plane(img: &Image, ch: usize) -> Vec<f64> {
    img.data().iter().skip(ch).step_by(3).copied().collect()
}

/// Mean SSIM and, optionally, its gradient with respect to `a`.
fn ssim_impl(
    a: &Image,
    b: &Image,
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(f64, Option<Image>)> {
    a.check_same_dims(b)?;
    let (w, h) = a.dims();
    let n = cfg.ssim_window;
    if w < n || h < n {
        return Err(Error::Shape(alloc::format!(
            "{w}x{h} image is smaller than the {n}x{n} SSIM window"
        )));
    }
    let win = gaussian_window(n, cfg.ssim_sigma);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let vcount = (w - n + 1) * (h - n + 1);
    let norm = 1.0 / (3 * vcount) as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Image::new(w, h));

    for ch in 0..3 {
        let x = channel_plane(a, ch);
        let y = channel_plane(b, ch);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mu_x = filter_valid(&x, w, h, &win);
        let mu_y = filter_valid(&y, w, h, &win);
        let e_xx = filter_valid(&xx, w, h, &win);
        let e_yy = filter_valid(&yy, w, h, &win);
        let e_xy = filter_valid(&xy, w, h, &win);

        let mut g_mu = vec![0.0; vcount];
        let mut g_xx = vec![0.0; vcount];
        let mut g_xy = vec![0.0; vcount];
        for p in 0..vcount {
            let (mx, my) = (mu_x[p], mu_y[p]);
            let sxx = e_xx[p] - mx * mx;
            let syy = e_yy[p] - my * my;
            let sxy = e_xy[p] - mx * my;
            let a1 = 2.0 * mx * my + c1;
            let a2 = 2.0 * sxy + c2;
            let b1 = mx * mx + my * my + c1;
            let b2 = sxx + syy + c2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                g_mu[p] = (2.0 * my * a2 - 2.0 * my * a1) / (b1 * b2)
                    - s * (2.0 * mx / b1 - 2.0 * mx / b2);
                g_xx[p] = -s / b2;
                g_xy[p] = 2.0 * a1 / (b1 * b2);
            }
        }
        if let Some(grad) = grad.as_mut() {
            let t_mu = filter_valid_adjoint(&g_mu, w, h, &win);
            let t_xx = filter_valid_adjoint(&g_xx, w, h, &win);
            let t_xy = filter_valid_adjoint(&g_xy, w, h, &win);
            let data = grad.data_mut();
            for i in 0..w * h {
                data[i * 3 + ch] = norm * (t_mu[i] + 2.0 * x[i] * t_xx[i] + y[i] * t_xy[i]);
            }
        }
    }
    Ok((total * norm, grad))
}

/// Mean structural similarity of two images with peak value 1.
pub fn ssim(a: &Image, b: &Image, cfg: &LossConfig) -> Result<f64> {
    ssim_impl(a, b, cfg, false).map(|(s, _)| s)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical images.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    a.check_same_dims(b)?;
    let n = a.data().len();
    if n == 0 {
        return Err(Error::Shape("empty image".into()));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * math::log10(peak * peak / mse))
}

/// Training loss and `dloss/drendered`.
pub fn loss(rendered: &Image, target: &Image, cfg: &LossConfig) -> Result<(f64, Image)> {
    rendered.check_same_dims(target)?;
    let (w, h) = rendered.dims();
    let n = (w * h * 3) as f64;
    if n == 0.0 {
        return Err(Error::Shape("empty image".into()));
    }
    let lambda = cfg.lambda_dssim;
    let mut grad = Image::new(w, h);
    let mut l1 = 0.0;
    for ((g, r), t) in grad
        .data_mut()
        .iter_mut()
        .zip(rendered.data())
        .zip(target.data())
    {
        let d = r - t;
        l1 += d.abs();
        let sign = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        *g = (1.0 - lambda) * sign / n;
    }
    let mut value = (1.0 - lambda) * l1 / n;
    if lambda > 0.0 {
        let (s, sg) = ssim_impl(rendered, target, cfg, true)?;
        value += lambda * (1.0 - s) / 2.0;
        if let Some(sg) = sg {
            for (g, d) in grad.data_mut().iter_mut().zip(sg.data()) {
                *g -= 0.5 * lambda * d;
            }
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, k: f64) -> Image {
        let data = (0..w * h * 3)
            .map(|i| 0.5 + 0.4 * libm::sin(k * i as f64))
            .collect();
        Image::from_data(w, h, data).unwrap()
    }

    #[test]
    fn identical_images() {
        let a = ramp(16, 14, 0.37);
        let cfg = LossConfig::default();
        let (l, g) = loss(&a, &a, &cfg).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|v| v.abs() < 1e-12));
        assert!((ssim(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn pure_l1() {
        let r = Image::filled(6, 5, [0.3, 0.4, 0.5]);
        let t = Image::filled(6, 5, [0.4, 0.5, 0.6]);
        let cfg = LossConfig {
            lambda_dssim: 0.0,
            ..Default::default()
        };
        let (l, g) = loss(&r, &t, &cfg).unwrap();
        assert!((l - 0.1).abs() < 1e-12);
        let expect = -1.0 / (3.0 * 30.0);
        assert!(g.data().iter().all(|&v| v == expect));
    }

    #[test]
    fn psnr_of_known_mse() {
        let a = Image::filled(4, 4, [0.5; 3]);
        let b = Image::filled(4, 4, [0.6; 3]);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_closed_form_for_constants() {
        let mu = 0.7;
        let a = Image::filled(12, 12, [mu; 3]);
        let b = Image::new(12, 12);
        let c1 = SSIM_K1 * SSIM_K1;
        let s = ssim(&a, &b, &LossConfig::default()).unwrap();
        assert!((s - c1 / (mu * mu + c1)).abs() < 1e-12);
    }

    #[test]
    fn small_image_is_rejected() {
        let a = Image::new(10, 20);
        assert!(matches!(
            ssim(&a, &a, &LossConfig::default()),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            loss(&a, &Image::new(10, 19), &LossConfig::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn adjoint_identity() {
        // <F x, y> == <x, F^T y>
        let (w, h) = (15, 13);
        let win = gaussian_window(5, 1.1);
        let x: Vec<f64> = (0..w * h).map(|i| libm::sin(0.3 * i as f64)).collect();
        let y: Vec<f64> = (0..(w - 4) * (h - 4))
            .map(|i| libm::cos(0.7 * i as f64))
            .collect();
        let fx = filter_valid(&x, w, h, &win);
        let fty = filter_valid_adjoint(&y, w, h, &win);
        let lhs: f64 = fx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&fty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let bad = LossConfig {
            ssim_window: 10,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = LossConfig {
            lambda_dssim: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
