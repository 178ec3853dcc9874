//! Exact per-pixel splatting of a [`GaussianCloud`] and its analytic adjoint.
//!
//! Each Gaussian is projected with the local affine (EWA) approximation,
//! sorted by camera depth and alpha-blended front to back:
//!
//! ```text
//! C(x) = sum_i c_i a_i(x) T_i(x) + T_N(x) * background
//! a_i(x) = min(o_i G'_i(x), 0.999),   T_i = prod_{j<i} (1 - a_j)
//! ```
//!
//! With a sigma cutoff, a splat only covers pixels whose Mahalanobis distance
//! is within the cutoff; the optional tile grid merely restricts which splats
//! each pixel visits and never changes the result.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{self, Mat3, Quat, Vec3};
use crate::model::{Camera, Gaussian, GaussianCloud};
use crate::par;
use crate::sh;

/// Low-pass term added to the screen-space covariance diagonal, pixels².
pub const DILATION: f64 = 0.3;
pub const ALPHA_MAX: f64 = 0.999;
pub const TRANSMITTANCE_CUTOFF: f64 = 1e-4;

const ROWS_PER_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    /// Splat support radius in standard deviations; `None` evaluates every
    /// splat at every pixel and disables screen-space culling.
    pub cutoff_sigma: Option<f64>,
    /// Stop compositing once transmittance would fall below 1e-4.
    pub early_termination: bool,
    /// Tile edge for binning in pixels, 0 to disable. Ignored without a
    /// cutoff.
    pub tile_size: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            cutoff_sigma: Some(3.0),
            early_termination: true,
            tile_size: 16,
        }
    }
}

impl RenderSettings {
    /// No truncation, no early termination: the plain blending sum.
    pub fn exact() -> Self {
        Self {
            cutoff_sigma: None,
            early_termination: false,
            tile_size: 0,
        }
    }
}

/// A projected Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    /// Index into the cloud at render time.
    pub index: usize,
    pub source_id: u64,
    pub mean2d: [f64; 2],
    /// `(xx, xy, yy)` of the dilated screen covariance.
    pub cov2d: [f64; 3],
    /// `(a, b, c)` of the inverse covariance `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub color: [f64; 3],
    pub opacity: f64,
    pub view_jacobian: [[f64; 3]; 2],
    /// Screen radius of the support ellipse's major axis, pixels.
    pub radius: f64,
    /// Inclusive pixel bounds `[x0, x1, y0, y1]`.
    pub bbox: [usize; 4],
    cam_point: Vec3,
    view_vec: Vec3,
    raw_color: [f64; 3],
}

/// One blending term at a pixel, in front-to-back order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub splat: u32,
    pub alpha: f64,
    /// Gaussian falloff at the pixel before opacity.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: Image,
    pub final_transmittance: Vec<f64>,
    pub background: [f64; 3],
    /// Splats in compositing (ascending depth) order.
    pub splats: Vec<Splat2D>,
    pub settings: RenderSettings,
    offsets: Vec<usize>,
    contributions: Vec<Contribution>,
    generation: u64,
    cloud_len: usize,
}

impl RenderOutput {
    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Blending terms recorded at pixel `(x, y)`.
    pub fn contributors(&self, x: usize, y: usize) -> &[Contribution] {
        let p = y * self.width() + x;
        &self.contributions[self.offsets[p]..self.offsets[p + 1]]
    }

    pub fn transmittance(&self, x: usize, y: usize) -> f64 {
        self.final_transmittance[y * self.width() + x]
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }
}

/// Per-Gaussian densification statistics, aligned with cloud indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewspaceGradStats {
    pub signed_grad_norm_sum: Vec<f64>,
    pub abs_grad_norm_sum: Vec<f64>,
    pub observation_count: Vec<u32>,
    pub max_screen_radius: Vec<f64>,
}

impl ViewspaceGradStats {
    pub fn zeros(len: usize) -> Self {
        Self {
            signed_grad_norm_sum: vec![0.0; len],
            abs_grad_norm_sum: vec![0.0; len],
            observation_count: vec![0; len],
            max_screen_radius: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.observation_count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observation_count.is_empty()
    }

    /// Zero every accumulator, keeping the length.
    pub fn reset(&mut self) {
        let len = self.len();
        *self = Self::zeros(len);
    }

    pub fn accumulate(&mut self, other: &ViewspaceGradStats) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Shape(alloc::format!(
                "stats for {} gaussians added to stats for {}",
                other.len(),
                self.len()
            )));
        }
        for i in 0..self.len() {
            self.signed_grad_norm_sum[i] += other.signed_grad_norm_sum[i];
            self.abs_grad_norm_sum[i] += other.abs_grad_norm_sum[i];
            self.observation_count[i] += other.observation_count[i];
            self.max_screen_radius[i] = self.max_screen_radius[i].max(other.max_screen_radius[i]);
        }
        Ok(())
    }

    /// Re-align to a new cloud layout; `mapping[new] = Some(old)` keeps an
    /// entry, `None` starts it at zero.
    pub fn remap(&mut self, mapping: &[Option<usize>]) {
        let mut out = Self::zeros(mapping.len());
        for (new, old) in mapping.iter().enumerate() {
            if let Some(old) = *old {
                out.signed_grad_norm_sum[new] = self.signed_grad_norm_sum[old];
                out.abs_grad_norm_sum[new] = self.abs_grad_norm_sum[old];
                out.observation_count[new] = self.observation_count[old];
                out.max_screen_radius[new] = self.max_screen_radius[old];
            }
        }
        *self = out;
    }
}

/// Loss gradients for every cloud parameter group, aligned with cloud indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudGrads {
    pub position: Vec<Vec3>,
    pub log_scale: Vec<Vec3>,
    pub rotation: Vec<Quat>,
    pub opacity_logit: Vec<f64>,
    /// Same layout as the cloud's SH storage.
    pub sh: Vec<f64>,
}

impl CloudGrads {
    pub fn zeros(len: usize, sh_stride: usize) -> Self {
        Self {
            position: vec![[0.0; 3]; len],
            log_scale: vec![[0.0; 3]; len],
            rotation: vec![[0.0; 4]; len],
            opacity_logit: vec![0.0; len],
            sh: vec![0.0; len * sh_stride],
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct BackwardOutput {
    pub grads: CloudGrads,
    pub stats: ViewspaceGradStats,
}

#[allow(clippy::too_many_arguments)]
fn project_parts(
    camera: &Camera,
    index: usize,
    source_id: u64,
    position: &Vec3,
    log_scale: &Vec3,
    rotation: &Quat,
    opacity_logit: f64,
    coeffs: &[f64],
    sh_degree: usize,
    settings: &RenderSettings,
) -> Option<Splat2D> {
    let p = camera.world_to_camera(position);
    if p[2] <= camera.near_clip {
        return None;
    }
    let cov3 = crate::model::build_covariance(log_scale, rotation).ok()?;
    let w = &camera.rotation;
    let v = math::mat_mul_bt(&math::mat_mul(w, &cov3), w);
    let (x, y, z) = (p[0], p[1], p[2]);
    let jac = [
        [camera.fx / z, 0.0, -camera.fx * x / (z * z)],
        [0.0, camera.fy / z, -camera.fy * y / (z * z)],
    ];
    // J V J^T
    let mut jv = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            jv[r][c] = jac[r][0] * v[0][c] + jac[r][1] * v[1][c] + jac[r][2] * v[2][c];
        }
    }
    let cxx = math::dot(&jv[0], &jac[0]) + DILATION;
    let cxy = math::dot(&jv[0], &jac[1]);
    let cyy = math::dot(&jv[1], &jac[1]) + DILATION;
    let det = cxx * cyy - cxy * cxy;
    if !(det > 0.0) {
        return None;
    }
    let conic = [cyy / det, -cxy / det, cxx / det];
    let mean2d = [camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy];

    let mid = 0.5 * (cxx + cyy);
    let lambda_max = mid + math::sqrt((mid * mid - det).max(0.0));
    let (width, height) = (camera.width, camera.height);
    let (bbox, radius) = match settings.cutoff_sigma {
        Some(k) => {
            let rx = k * math::sqrt(cxx);
            let ry = k * math::sqrt(cyy);
            let x0 = libm::ceil(mean2d[0] - rx).max(0.0);
            let x1 = libm::floor(mean2d[0] + rx).min(width as f64 - 1.0);
            let y0 = libm::ceil(mean2d[1] - ry).max(0.0);
            let y1 = libm::floor(mean2d[1] + ry).min(height as f64 - 1.0);
            if !(x0 <= x1 && y0 <= y1) {
                return None;
            }
            (
                [x0 as usize, x1 as usize, y0 as usize, y1 as usize],
                k * math::sqrt(lambda_max),
            )
        }
        None => ([0, width - 1, 0, height - 1], 3.0 * math::sqrt(lambda_max)),
    };

    let view_vec = math::sub(position, &camera.center());
    let dir = math::scale(&view_vec, 1.0 / math::norm(&view_vec));
    let raw_color = sh::raw_color(coeffs, sh_degree, &dir);
    Some(Splat2D {
        index,
        source_id,
        mean2d,
        cov2d: [cxx, cxy, cyy],
        conic,
        depth: z,
        color: raw_color.map(|c| c.max(0.0)),
        opacity: math::sigmoid(opacity_logit),
        view_jacobian: jac,
        radius,
        bbox,
        cam_point: p,
        view_vec,
        raw_color,
    })
}

/// Project one Gaussian; `None` when culled by the near plane or, with a
/// cutoff, when its support ellipse misses every pixel.
pub fn project_gaussian(
    camera: &Camera,
    gaussian: &Gaussian,
    sh_degree: usize,
    settings: &RenderSettings,
) -> Option<Splat2D> {
    project_parts(
        camera,
        0,
        0,
        &gaussian.position,
        &gaussian.log_scale,
        &gaussian.rotation,
        gaussian.opacity_logit,
        &gaussian.sh,
        sh_degree,
        settings,
    )
}

fn project_cloud(
    camera: &Camera,
    cloud: &GaussianCloud,
    settings: &RenderSettings,
) -> Vec<Splat2D> {
    let degree = cloud.sh_degree();
    let mut splats: Vec<Splat2D> = (0..cloud.len())
        .filter_map(|i| {
            project_parts(
                camera,
                i,
                cloud.ids()[i],
                &cloud.positions()[i],
                &cloud.log_scales()[i],
                &cloud.rotations()[i],
                cloud.opacity_logits()[i],
                cloud.sh_of(i),
                degree,
                settings,
            )
        })
        .collect();
    splats.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.source_id.cmp(&b.source_id))
    });
    splats
}

/// Splat lists per tile, each in compositing order.
struct TileBins {
    size: usize,
    tiles_x: usize,
    bins: Vec<Vec<u32>>,
}

impl TileBins {
    fn build(splats: &[Splat2D], width: usize, height: usize, size: usize) -> Self {
        let tiles_x = width.div_ceil(size);
        let tiles_y = height.div_ceil(size);
        let mut bins = vec![Vec::new(); tiles_x * tiles_y];
        for (s, splat) in splats.iter().enumerate() {
            let [x0, x1, y0, y1] = splat.bbox;
            for ty in (y0 / size)..=(y1 / size) {
                for tx in (x0 / size)..=(x1 / size) {
                    bins[ty * tiles_x + tx].push(s as u32);
                }
            }
        }
        Self {
            size,
            tiles_x,
            bins,
        }
    }

    fn bin(&self, x: usize, y: usize) -> &[u32] {
        &self.bins[(y / self.size) * self.tiles_x + x / self.size]
    }
}

struct Candidates {
    all: Vec<u32>,
    tiles: Option<TileBins>,
}

impl Candidates {
    fn new(splats: &[Splat2D], camera: &Camera, settings: &RenderSettings) -> Self {
        let tiles = match (settings.cutoff_sigma, settings.tile_size) {
            (Some(_), size) if size > 0 => {
                Some(TileBins::build(splats, camera.width, camera.height, size))
            }
            _ => None,
        };
        let all = if tiles.is_none() {
            (0..splats.len() as u32).collect()
        } else {
            Vec::new()
        };
        Self { all, tiles }
    }

    fn at(&self, x: usize, y: usize) -> &[u32] {
        match &self.tiles {
            Some(t) => t.bin(x, y),
            None => &self.all,
        }
    }
}

/// Gaussian value of a splat at pixel center `(x, y)`, or `None` outside its
/// support.
#[inline]
fn splat_weight(splat: &Splat2D, x: usize, y: usize, cutoff_sq: Option<f64>) -> Option<f64> {
    let [x0, x1, y0, y1] = splat.bbox;
    if x < x0 || x > x1 || y < y0 || y > y1 {
        return None;
    }
    let dx = x as f64 - splat.mean2d[0];
    let dy = y as f64 - splat.mean2d[1];
    let [a, b, c] = splat.conic;
    let q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
    if let Some(limit) = cutoff_sq {
        if q > limit {
            return None;
        }
    }
    Some(math::exp(-0.5 * q))
}

struct RowOutput {
    rgb: Vec<f64>,
    transmittance: Vec<f64>,
    counts: Vec<usize>,
    contributions: Vec<Contribution>,
}

/// Render `cloud` from `camera`.
pub fn render(
    camera: &Camera,
    cloud: &GaussianCloud,
    background: [f64; 3],
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    if let Some((id, field)) = cloud.find_non_finite() {
        return Err(Error::NonFinite { id, field });
    }
    camera.validate()?;
    let splats = project_cloud(camera, cloud, settings);
    let candidates = Candidates::new(&splats, camera, settings);
    let cutoff_sq = settings.cutoff_sigma.map(|k| k * k);
    let early = settings.early_termination;
    let width = camera.width;

    let rows = par::map_indexed(camera.height, |y| {
        let mut out = RowOutput {
            rgb: Vec::with_capacity(width * 3),
            transmittance: Vec::with_capacity(width),
            counts: Vec::with_capacity(width),
            contributions: Vec::new(),
        };
        for x in 0..width {
            let mut t = 1.0;
            let mut rgb = [0.0; 3];
            let mut count = 0;
            for &s in candidates.at(x, y) {
                let splat = &splats[s as usize];
                let Some(g) = splat_weight(splat, x, y, cutoff_sq) else {
                    continue;
                };
                let alpha = (splat.opacity * g).min(ALPHA_MAX);
                if alpha <= 0.0 {
                    continue;
                }
                let next_t = t * (1.0 - alpha);
                if early && next_t < TRANSMITTANCE_CUTOFF {
                    break;
                }
                let w = alpha * t;
                for ch in 0..3 {
                    rgb[ch] += splat.color[ch] * w;
                }
                out.contributions.push(Contribution {
                    splat: s,
                    alpha,
                    weight: g,
                });
                count += 1;
                t = next_t;
            }
            for ch in 0..3 {
                out.rgb.push(rgb[ch] + t * background[ch]);
            }
            out.transmittance.push(t);
            out.counts.push(count);
        }
        out
    });

    let npix = width * camera.height;
    let mut data = Vec::with_capacity(npix * 3);
    let mut final_transmittance = Vec::with_capacity(npix);
    let mut offsets = Vec::with_capacity(npix + 1);
    let total: usize = rows.iter().map(|r| r.contributions.len()).sum();
    let mut contributions = Vec::with_capacity(total);
    offsets.push(0);
    for row in rows {
        data.extend_from_slice(&row.rgb);
        final_transmittance.extend_from_slice(&row.transmittance);
        for c in row.counts {
            let last = *offsets.last().unwrap_or(&0);
            offsets.push(last + c);
        }
        contributions.extend_from_slice(&row.contributions);
    }
    Ok(RenderOutput {
        image: Image::from_data(width, camera.height, data)?,
        final_transmittance,
        background,
        splats,
        settings: *settings,
        offsets,
        contributions,
        generation: cloud.generation(),
        cloud_len: cloud.len(),
    })
}

/// Screen-space gradient accumulators for one splat.
#[derive(Debug, Clone, Copy, Default)]
struct SplatAccum {
    d_mean: [f64; 2],
    abs_mean: [f64; 2],
    d_conic: [f64; 3],
    d_color: [f64; 3],
    d_opacity: f64,
    hits: u32,
}

impl SplatAccum {
    fn add(&mut self, o: &SplatAccum) {
        for i in 0..2 {
            self.d_mean[i] += o.d_mean[i];
            self.abs_mean[i] += o.abs_mean[i];
        }
        for i in 0..3 {
            self.d_conic[i] += o.d_conic[i];
            self.d_color[i] += o.d_color[i];
        }
        self.d_opacity += o.d_opacity;
        self.hits += o.hits;
    }
}

fn backward_rows(
    out: &RenderOutput,
    loss_grad: &Image,
    rows: core::ops::Range<usize>,
    accum: &mut [SplatAccum],
) {
    let bg = out.background;
    let mut trans = Vec::new();
    for y in rows {
        for x in 0..out.width() {
            let contribs = out.contributors(x, y);
            if contribs.is_empty() {
                continue;
            }
            let d_pix = loss_grad.get(x, y);
            trans.clear();
            let mut t = 1.0;
            for c in contribs {
                trans.push(t);
                t *= 1.0 - c.alpha;
            }
            // dL/dT_{i+1}, starting from the background term
            let mut g_t_next = math::dot(&d_pix, &bg);
            for (i, c) in contribs.iter().enumerate().rev() {
                let splat = &out.splats[c.splat as usize];
                let acc = &mut accum[c.splat as usize];
                let t_i = trans[i];
                let alpha = c.alpha;
                let dc = math::dot(&d_pix, &splat.color);
                for ch in 0..3 {
                    acc.d_color[ch] += d_pix[ch] * alpha * t_i;
                }
                let d_alpha = (dc - g_t_next) * t_i;
                g_t_next = dc * alpha + g_t_next * (1.0 - alpha);
                acc.hits += 1;

                let g = c.weight;
                if splat.opacity * g > ALPHA_MAX {
                    continue;
                }
                acc.d_opacity += d_alpha * g;
                let d_g = d_alpha * splat.opacity;
                let dx = x as f64 - splat.mean2d[0];
                let dy = y as f64 - splat.mean2d[1];
                let [a, b, cc] = splat.conic;
                let dmx = d_g * g * (a * dx + b * dy);
                let dmy = d_g * g * (b * dx + cc * dy);
                acc.d_mean[0] += dmx;
                acc.d_mean[1] += dmy;
                acc.abs_mean[0] += dmx.abs();
                acc.abs_mean[1] += dmy.abs();
                let h = -0.5 * d_g * g;
                acc.d_conic[0] += h * dx * dx;
                acc.d_conic[1] += h * 2.0 * dx * dy;
                acc.d_conic[2] += h * dy * dy;
            }
        }
    }
}

/// Analytic gradients of a scalar loss, given `dL/dC` per pixel, with respect
/// to every Gaussian parameter, plus this view's viewspace-gradient
/// statistics. Statistics are reported in normalized device units
/// (pixel gradient times half the image extent).
pub fn backward(
    out: &RenderOutput,
    camera: &Camera,
    cloud: &GaussianCloud,
    loss_grad_image: &Image,
) -> Result<BackwardOutput> {
    if out.generation != cloud.generation() || out.cloud_len != cloud.len() {
        return Err(Error::StaleAuxiliary {
            rendered: out.generation,
            current: cloud.generation(),
        });
    }
    out.image.check_same_dims(loss_grad_image)?;
    if camera.width != out.width() || camera.height != out.height() {
        return Err(Error::Shape("camera does not match render output".into()));
    }
    let nsplat = out.splats.len();
    let height = out.height();
    let chunks = height.div_ceil(ROWS_PER_CHUNK);
    let partial = par::map_indexed(chunks, |c| {
        let mut acc = vec![SplatAccum::default(); nsplat];
        let rows = c * ROWS_PER_CHUNK..((c + 1) * ROWS_PER_CHUNK).min(height);
        backward_rows(out, loss_grad_image, rows, &mut acc);
        acc
    });
    let mut accum = vec![SplatAccum::default(); nsplat];
    for part in &partial {
        for (a, p) in accum.iter_mut().zip(part) {
            a.add(p);
        }
    }

    let mut grads = CloudGrads::zeros(cloud.len(), cloud.sh_stride());
    let mut stats = ViewspaceGradStats::zeros(cloud.len());
    let half_w = 0.5 * out.width() as f64;
    let half_h = 0.5 * out.height() as f64;
    for (splat, acc) in out.splats.iter().zip(&accum) {
        if acc.hits == 0 {
            continue;
        }
        let i = splat.index;
        chain_to_gaussian(splat, acc, camera, cloud, &mut grads);
        let gx = acc.d_mean[0] * half_w;
        let gy = acc.d_mean[1] * half_h;
        let ax = acc.abs_mean[0] * half_w;
        let ay = acc.abs_mean[1] * half_h;
        stats.signed_grad_norm_sum[i] = math::sqrt(gx * gx + gy * gy);
        stats.abs_grad_norm_sum[i] = math::sqrt(ax * ax + ay * ay);
        stats.observation_count[i] = 1;
        stats.max_screen_radius[i] = splat.radius;
    }
    Ok(BackwardOutput { grads, stats })
}

fn chain_to_gaussian(
    splat: &Splat2D,
    acc: &SplatAccum,
    camera: &Camera,
    cloud: &GaussianCloud,
    grads: &mut CloudGrads,
) {
    let i = splat.index;
    let degree = cloud.sh_degree();
    let stride = cloud.sh_stride();
    let coeffs = cloud.sh_of(i);
    let mut d_pos = [0.0; 3];

    // color -> SH coefficients and view direction
    let d_color: [f64; 3] = core::array::from_fn(|ch| {
        if splat.raw_color[ch] < 0.0 {
            0.0
        } else {
            acc.d_color[ch]
        }
    });
    let vlen = math::norm(&splat.view_vec);
    let dir = math::scale(&splat.view_vec, 1.0 / vlen);
    let basis = sh::basis(degree, &dir);
    let partials = sh::basis_partials(degree, &dir);
    let d_sh = &mut grads.sh[i * stride..(i + 1) * stride];
    let mut d_dir = [0.0; 3];
    for k in 0..sh::coeff_count(degree) {
        let mut w = 0.0;
        for ch in 0..3 {
            d_sh[k * 3 + ch] = d_color[ch] * basis[k];
            w += d_color[ch] * coeffs[k * 3 + ch];
        }
        for ax in 0..3 {
            d_dir[ax] += w * partials[k][ax];
        }
    }
    let radial = math::dot(&dir, &d_dir);
    for ax in 0..3 {
        d_pos[ax] += (d_dir[ax] - dir[ax] * radial) / vlen;
    }

    // opacity
    let o = splat.opacity;
    grads.opacity_logit[i] = acc.d_opacity * o * (1.0 - o);

    // conic -> 2D covariance entries (x, y, z) = (xx, xy, yy)
    let [cx, cy, cz] = splat.cov2d;
    let det = cx * cz - cy * cy;
    let det2 = det * det;
    let [ga, gb, gc] = acc.d_conic;
    let d_cx = ga * (-cz * cz / det2) + gb * (cy * cz / det2) + gc * (-cy * cy / det2);
    let d_cy = ga * (2.0 * cy * cz / det2)
        + gb * (-(det + 2.0 * cy * cy) / det2)
        + gc * (2.0 * cx * cy / det2);
    let d_cz = ga * (-cy * cy / det2) + gb * (cx * cy / det2) + gc * (-cx * cx / det2);
    let g2 = [[d_cx, 0.5 * d_cy], [0.5 * d_cy, d_cz]];

    // 2D covariance -> view-space covariance V and Jacobian J
    let jac = &splat.view_jacobian;
    let w = &camera.rotation;
    let log_scale = &cloud.log_scales()[i];
    let q_raw = &cloud.rotations()[i];
    let qn = math::quat_norm(q_raw);
    let q = math::quat_normalize(q_raw);
    let rot = math::quat_to_mat(&q);
    let s = log_scale.map(math::exp);
    let mut m = rot;
    for row in m.iter_mut() {
        for (v, sk) in row.iter_mut().zip(&s) {
            *v *= sk;
        }
    }
    let cov3 = math::mat_mul_bt(&m, &m);
    let v = math::mat_mul_bt(&math::mat_mul(w, &cov3), w);

    // g2 J (2x3)
    let mut g2j = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            g2j[r][c] = g2[r][0] * jac[0][c] + g2[r][1] * jac[1][c];
        }
    }
    // dL/dV = J^T g2 J
    let mut d_v = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            d_v[a][b] = jac[0][a] * g2j[0][b] + jac[1][a] * g2j[1][b];
        }
    }
    // dL/dJ = 2 g2 J V
    let mut d_j = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            d_j[r][c] = 2.0 * (g2j[r][0] * v[0][c] + g2j[r][1] * v[1][c] + g2j[r][2] * v[2][c]);
        }
    }

    // V = W cov W^T -> dL/dcov = W^T dL/dV W
    let d_cov = math::mat_mul(&math::mat_mul_at(w, &d_v), w);
    // cov = M M^T -> dL/dM = 2 dL/dcov M
    let d_m = {
        let sym: Mat3 =
            core::array::from_fn(|a| core::array::from_fn(|b| 0.5 * (d_cov[a][b] + d_cov[b][a])));
        let mut out = math::mat_mul(&sym, &m);
        for row in out.iter_mut() {
            for v in row.iter_mut() {
                *v *= 2.0;
            }
        }
        out
    };
    let mut d_rot: Mat3 = [[0.0; 3]; 3];
    for k in 0..3 {
        let mut ds = 0.0;
        for r in 0..3 {
            ds += rot[r][k] * d_m[r][k];
            d_rot[r][k] = s[k] * d_m[r][k];
        }
        grads.log_scale[i][k] = ds * s[k];
    }
    let partials_q = math::quat_to_mat_partials(&q);
    let d_qn: [f64; 4] = core::array::from_fn(|j| math::mat_inner(&d_rot, &partials_q[j]));
    let proj = d_qn.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
    for j in 0..4 {
        grads.rotation[i][j] = (d_qn[j] - q[j] * proj) / qn;
    }

    // mean: through the projected center and through J's dependence on p
    let [px, py, pz] = splat.cam_point;
    let (fx, fy) = (camera.fx, camera.fy);
    let dm = acc.d_mean;
    let z2 = pz * pz;
    let z3 = z2 * pz;
    let d_p = [
        jac[0][0] * dm[0] + d_j[0][2] * (-fx / z2),
        jac[1][1] * dm[1] + d_j[1][2] * (-fy / z2),
        jac[0][2] * dm[0]
            + jac[1][2] * dm[1]
            + d_j[0][0] * (-fx / z2)
            + d_j[0][2] * (2.0 * fx * px / z3)
            + d_j[1][1] * (-fy / z2)
            + d_j[1][2] * (2.0 * fy * py / z3),
    ];
    let d_world = math::mat_t_vec(w, &d_p);
    for ax in 0..3 {
        grads.position[i][ax] = d_pos[ax] + d_world[ax];
    }
}
