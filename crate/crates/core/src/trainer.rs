//! The optimization loop: one view per step, pyramid-staged supervision,
//! Adam, density control on a fixed clock and periodic evaluation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::densify::{self, DensifyConfig, DensifyMode, DensifyReport, GradSource};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::init::{self, ColoredPoint};
use crate::loss::{self, LossConfig};
use crate::model::{Camera, GaussianCloud};
use crate::optim::{id_mapping, Adam, AdamConfig, LearningRates};
use crate::raster::{backward, render, RenderSettings, ViewspaceGradStats};
use crate::schedule::{camera_for_level, ImagePyramid, StageBoundaries, StageClock};
use crate::sh;

/// Pyramid depth, substages per stage and where each stage ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub levels: usize,
    pub substages: usize,
    pub boundaries: StageBoundaries,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            substages: 3,
            boundaries: StageBoundaries::Fractions(vec![2500.0 / 30000.0, 6000.0 / 30000.0, 1.0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rates: LearningRates,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub densify: DensifyConfig,
    pub stages: StageConfig,
    /// Supervise stage `i` with pyramid level `i`; otherwise always full
    /// resolution.
    pub use_pyramid: bool,
    pub sh_degree: usize,
    pub background: [f64; 3],
    pub seed: u64,
    pub eval_interval: usize,
    /// 0 disables checkpoints.
    pub checkpoint_interval: usize,
    pub render: RenderSettings,
    /// Multiplier on the position learning rate; the scene extent when
    /// absent.
    pub position_lr_scale: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::resgs(30_000)
    }
}

impl TrainConfig {
    /// Residual split, pyramid supervision and varying thresholds.
    pub fn resgs(iterations: usize) -> Self {
        Self {
            iterations,
            learning_rates: LearningRates::default(),
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
            densify: DensifyConfig {
                densify_start: DensifyConfig::default()
                    .densify_start
                    .min(iterations * 2 / 5),
                densify_stop: iterations * 2 / 5,
                ..DensifyConfig::default()
            },
            stages: StageConfig::default(),
            use_pyramid: true,
            sh_degree: 1,
            background: [0.0; 3],
            seed: 0,
            eval_interval: (iterations / 10).max(1),
            checkpoint_interval: 0,
            render: RenderSettings::default(),
            position_lr_scale: None,
        }
    }

    /// Classic split/clone at full resolution with a fixed threshold.
    pub fn baseline(iterations: usize) -> Self {
        let mut cfg = Self::resgs(iterations);
        cfg.use_pyramid = false;
        cfg.densify.mode = DensifyMode::BaselineSplitClone;
        cfg.densify.varying_threshold = false;
        cfg.densify.grad_source = GradSource::Signed;
        cfg.densify.tau = 0.0002;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.iterations == 0 {
            return fail("iterations must be positive");
        }
        if self.densify.densify_stop > self.iterations {
            return fail("densify_stop must not exceed iterations");
        }
        if self.eval_interval == 0 {
            return fail("eval_interval must be at least 1");
        }
        if self.sh_degree > sh::MAX_DEGREE {
            return fail("sh_degree must be 0..=3");
        }
        if self.background.iter().any(|c| !c.is_finite()) {
            return fail("background must be finite");
        }
        if let Some(s) = self.position_lr_scale {
            if !(s > 0.0) {
                return fail("position_lr_scale must be positive");
            }
        }
        if let Some(k) = self.render.cutoff_sigma {
            if !(k > 0.0) {
                return fail("cutoff_sigma must be positive");
            }
        }
        self.learning_rates.validate()?;
        self.adam.validate()?;
        self.loss.validate()?;
        self.densify.validate()?;
        self.clock()?;
        Ok(())
    }

    pub fn clock(&self) -> Result<StageClock> {
        let clock = StageClock::from_boundaries(
            self.iterations,
            self.stages.substages,
            &self.stages.boundaries,
        )?;
        if clock.stages() != self.stages.levels {
            return Err(Error::Config(alloc::format!(
                "{} stage boundaries given for {} levels",
                clock.stages(),
                self.stages.levels
            )));
        }
        Ok(clock)
    }
}

/// A posed image.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub name: String,
    pub camera: Camera,
    pub image: Image,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub train: Vec<View>,
    pub test: Vec<View>,
    /// Initial point set; random points are used when empty.
    pub points: Vec<ColoredPoint>,
}

/// Metrics at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// 1-based count of completed steps.
    pub iteration: usize,
    pub loss: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub count: usize,
    pub level_histogram: Vec<usize>,
    pub stage: usize,
    pub substage: usize,
    pub max_level: u32,
    pub created_total: usize,
    pub removed_total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Densify,
    OpacityReduction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensifyEvent {
    pub iteration: usize,
    pub kind: EventKind,
    pub substage: usize,
    pub report: DensifyReport,
}

/// Contiguous iterations rendered at one resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderSpan {
    pub first: usize,
    pub last: usize,
    pub stage: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub initial_count: usize,
    pub entries: Vec<LogEntry>,
    pub events: Vec<DensifyEvent>,
    pub render_spans: Vec<RenderSpan>,
    /// Per-Gaussian optimizer steps skipped for non-finite gradients.
    pub skipped_updates: usize,
}

impl RunLog {
    fn note_render(&mut self, iteration: usize, stage: usize, width: usize, height: usize) {
        if let Some(span) = self.render_spans.last_mut() {
            if span.stage == stage && span.width == width && span.height == height {
                span.last = iteration;
                return;
            }
        }
        self.render_spans.push(RenderSpan {
            first: iteration,
            last: iteration,
            stage,
            width,
            height,
        });
    }

    pub fn densify_event_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Densify)
            .count()
    }
}

/// Hooks called from inside [`train_from`].
pub trait TrainObserver {
    fn on_log(&mut self, _entry: &LogEntry) -> Result<()> {
        Ok(())
    }

    fn on_event(&mut self, _event: &DensifyEvent) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _iteration: usize, _cloud: &GaussianCloud) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Mean PSNR and SSIM of `cloud` rendered from each view at full resolution.
pub fn evaluate(
    cloud: &GaussianCloud,
    views: &[View],
    background: [f64; 3],
    settings: &RenderSettings,
    loss_cfg: &LossConfig,
) -> Result<(f64, f64)> {
    if views.is_empty() {
        return Err(Error::Config("evaluation needs at least one view".into()));
    }
    let mut psnr = 0.0;
    let mut ssim = 0.0;
    for v in views {
        let out = render(&v.camera, cloud, background, settings)?;
        let (w, h) = v.image.dims();
        psnr += loss::psnr(&out.image, &v.image, 1.0)?;
        ssim += loss::ssim(&out.image, &v.image, &loss_cfg.fit_to(w, h))?;
    }
    let n = views.len() as f64;
    Ok((psnr / n, ssim / n))
}

/// Initial cloud for `dataset`: its points, or `fallback_points` uniform
/// random ones in the unit box when it has none.
pub fn initial_cloud(
    dataset: &Dataset,
    cfg: &TrainConfig,
    fallback_points: usize,
) -> Result<GaussianCloud> {
    if dataset.points.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2);
        let pts = init::random_points(fallback_points, [-0.5; 3], [0.5; 3], &mut rng);
        init::cloud_from_points(&pts, cfg.sh_degree)
    } else {
        init::cloud_from_points(&dataset.points, cfg.sh_degree)
    }
}

/// Train from the dataset's initial points.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<(GaussianCloud, RunLog)> {
    let cloud = initial_cloud(dataset, cfg, 1000)?;
    train_from(cloud, dataset, cfg, &mut ())
}

fn check_dataset(dataset: &Dataset) -> Result<()> {
    if dataset.train.is_empty() {
        return Err(Error::Config("dataset has no training views".into()));
    }
    for v in dataset.train.iter().chain(&dataset.test) {
        v.camera.validate()?;
        if v.image.dims() != (v.camera.width, v.camera.height) {
            return Err(Error::Shape(alloc::format!(
                "view {} image is {}x{}, camera expects {}x{}",
                v.name,
                v.image.width(),
                v.image.height(),
                v.camera.width,
                v.camera.height
            )));
        }
    }
    Ok(())
}

/// Train `cloud` on `dataset`.
pub fn train_from(
    mut cloud: GaussianCloud,
    dataset: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(GaussianCloud, RunLog)> {
    cfg.validate()?;
    check_dataset(dataset)?;
    if cloud.sh_degree() != cfg.sh_degree {
        return Err(Error::Config(alloc::format!(
            "cloud has SH degree {}, config asks for {}",
            cloud.sh_degree(),
            cfg.sh_degree
        )));
    }
    let clock = cfg.clock()?;
    let levels = cfg.stages.levels;
    let train_images: Vec<Image> = dataset.train.iter().map(|v| v.image.clone()).collect();
    let pyramid = ImagePyramid::build(&train_images, if cfg.use_pyramid { levels } else { 1 })?;
    let cameras: Vec<Camera> = dataset.train.iter().map(|v| v.camera.clone()).collect();
    let extent = cfg
        .densify
        .scene_extent
        .unwrap_or_else(|| densify::scene_extent(&cameras));
    let position_scale = cfg.position_lr_scale.unwrap_or(extent);
    let eval_views = if dataset.test.is_empty() {
        &dataset.train
    } else {
        &dataset.test
    };

    let mut view_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    view_rng.set_stream(0);
    let mut densify_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    densify_rng.set_stream(1);

    let mut adam = Adam::new(cfg.adam, cloud.len(), cloud.sh_stride());
    let mut stats = ViewspaceGradStats::zeros(cloud.len());
    let mut log = RunLog {
        initial_count: cloud.len(),
        ..Default::default()
    };
    let mut created_total = 0;
    let mut removed_total = 0;
    let mut last_checkpoint = None;
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let dcfg = &cfg.densify;

    for it in 0..cfg.iterations {
        let step = it + 1;
        let slot = it % order.len();
        if slot == 0 {
            order.shuffle(&mut view_rng);
        }
        let v = order[slot];
        let info = clock.stage_at(it)?;

        let (camera, target) = if cfg.use_pyramid {
            (
                camera_for_level(&cameras[v], info.level, levels),
                pyramid.image(info.level, v),
            )
        } else {
            (cameras[v].clone(), pyramid.image(1, v))
        };
        log.note_render(it, info.stage, camera.width, camera.height);

        let out = render(&camera, &cloud, cfg.background, &cfg.render)?;
        let (value, grad_image) = loss::loss(
            &out.image,
            target,
            &cfg.loss.fit_to(camera.width, camera.height),
        )?;
        if !value.is_finite() {
            return Err(Error::Diverged {
                iteration: step,
                last_checkpoint,
            });
        }
        let bw = backward(&out, &camera, &cloud, &grad_image)?;
        drop(out);
        if step <= dcfg.densify_stop {
            stats.accumulate(&bw.stats)?;
        }
        let rates = cfg.learning_rates.at(it, cfg.iterations, position_scale);
        log.skipped_updates += adam.step(&mut cloud, &bw.grads, &rates)?.len();
        cloud.normalize_rotations();

        if step % dcfg.densify_interval == 0
            && step >= dcfg.densify_start
            && step < dcfg.densify_stop
        {
            let before = cloud.ids().to_vec();
            // Gaussians about to be pruned are not densified, so nothing
            // created here is pruned in the same pass.
            let selected: Vec<u64> = densify::select(&stats, &cloud, info.substage, dcfg)?
                .into_iter()
                .filter(|&id| {
                    cloud
                        .index_of(id)
                        .is_some_and(|i| cloud.opacity(i) >= dcfg.prune_opacity_eps)
                })
                .collect();
            let mut report =
                densify::densify(&mut cloud, &selected, dcfg, extent, &mut densify_rng)?;
            report.merge(densify::prune(&mut cloud, dcfg.prune_opacity_eps));
            report.count_before = before.len();
            created_total += report.created.len();
            removed_total += report.removed_count();
            adam.remap(&id_mapping(&before, cloud.ids()));
            stats = ViewspaceGradStats::zeros(cloud.len());
            let event = DensifyEvent {
                iteration: step,
                kind: EventKind::Densify,
                substage: info.substage,
                report,
            };
            observer.on_event(&event)?;
            log.events.push(event);
        }
        let reduce_now = step % dcfg.opacity_reduction_interval == 0
            && step < cfg.iterations
            && (step < dcfg.densify_stop || dcfg.opacity_reduction_after_densify);
        if reduce_now {
            let before = cloud.ids().to_vec();
            densify::opacity_reduction(&mut cloud, dcfg.opacity_reduction_factor);
            let mut report = densify::prune(&mut cloud, dcfg.prune_opacity_eps);
            report.count_before = before.len();
            removed_total += report.removed_count();
            let mapping = id_mapping(&before, cloud.ids());
            adam.remap(&mapping);
            stats.remap(&mapping);
            let event = DensifyEvent {
                iteration: step,
                kind: EventKind::OpacityReduction,
                substage: info.substage,
                report,
            };
            observer.on_event(&event)?;
            log.events.push(event);
        }

        if step % cfg.eval_interval == 0 || step == cfg.iterations {
            let (psnr, ssim) =
                evaluate(&cloud, eval_views, cfg.background, &cfg.render, &cfg.loss)?;
            let entry = LogEntry {
                iteration: step,
                loss: value,
                psnr,
                ssim,
                count: cloud.len(),
                level_histogram: cloud.level_histogram(),
                stage: info.stage,
                substage: info.substage,
                max_level: cloud.max_level(),
                created_total,
                removed_total,
            };
            observer.on_log(&entry)?;
            log.entries.push(entry);
        }
        if cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 {
            observer.on_checkpoint(step, &cloud)?;
            last_checkpoint = Some(step);
        }
    }
    Ok((cloud, log))
}
