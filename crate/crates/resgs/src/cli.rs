//! Command-line front end.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use resgs_core::gradcheck::{run_suite, GradcheckConfig};
use resgs_core::raster::{render, RenderSettings};
use resgs_core::synthetic::{InitMode, SyntheticSpec};
use resgs_core::trainer::{
    evaluate, initial_cloud, train_from, DensifyEvent, LogEntry, RunLog, TrainConfig, TrainObserver,
};
use resgs_core::{Camera, GaussianCloud};

use crate::config::{config_hash, load_config, to_toml};
use crate::error::{Error, Result};
use crate::imageio::save_image;
use crate::manifest::{load_dataset, read_manifest};
use crate::metrics::{write_compare, write_events, write_metrics};
use crate::ply::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::synth::make_synthetic;

#[derive(Debug, Parser)]
#[command(
    name = "resgs",
    version,
    about = "Gaussian splatting with residual-split densification"
)]
struct Cli {
    /// Worker threads for rendering (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    MakeSynthetic(MakeSyntheticArgs),
    /// Train on a dataset.
    Train(TrainArgs),
    /// Render a checkpoint from one camera.
    Render(RenderArgs),
    /// Score a checkpoint against a dataset split.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients on random scenes.
    Gradcheck(GradcheckArgs),
    /// Train residual-split and baseline modes from one seed and tabulate.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct MakeSyntheticArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    n_gaussians: usize,
    #[arg(long, default_value_t = 10)]
    views: usize,
    #[arg(long, default_value_t = 128)]
    resolution: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `groundtruth-perturbed` or `random`.
    #[arg(long, default_value = "groundtruth-perturbed", value_parser = parse_init_mode)]
    init_mode: InitMode,
    /// Hold out the last view of every group of this many (0: none).
    #[arg(long, default_value_t = 5)]
    holdout_every: usize,
    /// Also write PNG copies of the images.
    #[arg(long)]
    png: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set densify.tau=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Random initial points when the manifest has none.
    #[arg(long, default_value_t = 1000)]
    random_points: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Camera JSON file.
    #[arg(long, conflicts_with_all = ["data", "view"])]
    camera: Option<PathBuf>,
    /// Manifest to take the camera from, with `--view`.
    #[arg(long, requires = "view")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    view: Option<String>,
    /// Output image, `.png` or `.rgbf`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
    background: Vec<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// `test` or `train`.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
    background: Vec<f64>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    scenes: usize,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

fn parse_init_mode(s: &str) -> std::result::Result<InitMode, String> {
    match s {
        "groundtruth-perturbed" => Ok(InitMode::GroundtruthPerturbed),
        "random" => Ok(InitMode::Random),
        other => Err(format!("unknown init mode `{other}`")),
    }
}

/// Writes checkpoints and prints progress while training.
struct CliObserver<'a> {
    dir: &'a Path,
    meta: CheckpointMeta,
    quiet: bool,
}

impl TrainObserver for CliObserver<'_> {
    fn on_log(&mut self, e: &LogEntry) -> resgs_core::Result<()> {
        if !self.quiet {
            eprintln!(
                "iter {:>6}  loss {:.5}  psnr {:.2}  ssim {:.4}  gaussians {}  stage {}  max level {}",
                e.iteration, e.loss, e.psnr, e.ssim, e.count, e.stage, e.max_level
            );
        }
        Ok(())
    }

    fn on_event(&mut self, _event: &DensifyEvent) -> resgs_core::Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, iteration: usize, cloud: &GaussianCloud) -> resgs_core::Result<()> {
        let path = self.dir.join(format!("checkpoint_{iteration:06}.ply"));
        save_checkpoint(cloud, &path, false, &self.meta)
            .map_err(|e| resgs_core::Error::External(e.to_string()))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn run_training(
    args: &RunArgs,
    cfg: &TrainConfig,
    dir: &Path,
    quiet: bool,
) -> Result<(GaussianCloud, RunLog)> {
    let dataset = load_dataset(&args.data)?;
    let cloud = initial_cloud(&dataset, cfg, args.random_points)?;
    create_dir(dir)?;
    let mut observer = CliObserver {
        dir,
        meta: CheckpointMeta {
            config_hash: Some(config_hash(cfg)),
        },
        quiet,
    };
    Ok(train_from(cloud, &dataset, cfg, &mut observer)?)
}

/// Train and write `config.toml`, `metrics.csv`, `events.csv`, periodic
/// checkpoints and `final.ply` into `dir`.
pub fn train_to_dir(
    args_data: &Path,
    config: Option<&Path>,
    overrides: &[String],
    dir: &Path,
) -> Result<RunLog> {
    let args = RunArgs {
        data: args_data.to_path_buf(),
        config: config.map(Path::to_path_buf),
        overrides: overrides.to_vec(),
        random_points: 1000,
    };
    train_cmd(
        &TrainArgs {
            run: args,
            out: dir.to_path_buf(),
        },
        true,
    )
}

fn train_cmd(args: &TrainArgs, quiet: bool) -> Result<RunLog> {
    let cfg = load_config(args.run.config.as_deref(), &args.run.overrides)?;
    let dir = &args.out;
    create_dir(dir)?;
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, to_toml(&cfg)).map_err(|e| Error::io(&cfg_path, e))?;
    let (cloud, log) = run_training(&args.run, &cfg, dir, quiet)?;
    let meta = CheckpointMeta {
        config_hash: Some(config_hash(&cfg)),
    };
    save_checkpoint(&cloud, &dir.join("final.ply"), true, &meta)?;
    write_metrics(&log, create(&dir.join("metrics.csv"))?)?;
    write_events(&log, create(&dir.join("events.csv"))?)?;
    Ok(log)
}

fn camera_from(args: &RenderArgs) -> Result<Camera> {
    if let Some(path) = &args.camera {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let camera: Camera =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        camera
            .validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
        return Ok(camera);
    }
    match (&args.data, &args.view) {
        (Some(data), Some(view)) => {
            let manifest = read_manifest(data)?;
            manifest
                .views
                .into_iter()
                .find(|v| &v.name == view)
                .map(|v| v.camera)
                .ok_or_else(|| {
                    Error::Usage(format!("no view named `{view}` in {}", data.display()))
                })
        }
        _ => Err(Error::Usage(
            "render needs --camera or --data with --view".into(),
        )),
    }
}

fn background(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::MakeSynthetic(a) => {
            let spec = SyntheticSpec {
                n_gaussians: a.n_gaussians,
                n_views: a.views,
                resolution: a.resolution,
                seed: a.seed,
                init_mode: a.init_mode,
                holdout_every: a.holdout_every,
                ..SyntheticSpec::default()
            };
            spec.validate().map_err(|e| Error::Usage(e.to_string()))?;
            let (manifest, _) = make_synthetic(&spec, &a.out, a.png)?;
            println!(
                "wrote {} views ({} train, {} test) to {}",
                manifest.views.len(),
                manifest.train.len(),
                manifest.test.len(),
                a.out.display()
            );
        }
        Command::Train(a) => {
            let log = train_cmd(&a, false)?;
            if let Some(last) = log.entries.last() {
                println!(
                    "final: psnr {:.3} ssim {:.4} gaussians {}",
                    last.psnr, last.ssim, last.count
                );
            }
        }
        Command::Render(a) => {
            let ckpt = load_checkpoint(&a.checkpoint)?;
            let camera = camera_from(&a)?;
            let out = render(
                &camera,
                &ckpt.cloud,
                background(&a.background),
                &RenderSettings::default(),
            )?;
            save_image(&out.image, &a.out)?;
            println!("wrote {}", a.out.display());
        }
        Command::Eval(a) => {
            let ckpt = load_checkpoint(&a.checkpoint)?;
            let dataset = load_dataset(&a.data)?;
            let views = match a.split.as_str() {
                "test" => &dataset.test,
                "train" => &dataset.train,
                other => return Err(Error::Usage(format!("unknown split `{other}`"))),
            };
            let (psnr, ssim) = evaluate(
                &ckpt.cloud,
                views,
                background(&a.background),
                &RenderSettings::default(),
                &Default::default(),
            )?;
            println!("psnr {psnr:.4}");
            println!("ssim {ssim:.6}");
            println!("gaussians {}", ckpt.cloud.len());
        }
        Command::Gradcheck(a) => {
            let cfg = GradcheckConfig::default();
            let report = run_suite(a.seed, a.scenes, &cfg)?;
            println!(
                "gradcheck: {} scenes, {} components, max rel error {:.3e}, max abs error {:.3e}",
                report.scenes, report.components, report.max_rel_error, report.max_abs_error
            );
            if let Some(w) = &report.worst {
                println!(
                    "worst: scene {} gaussian {} {}[{}] analytic {:e} numeric {:e}",
                    w.scene, w.id, w.group, w.component, w.analytic, w.numeric
                );
            }
            if !report.passed() {
                println!("FAILED: {} components above tolerance", report.failures);
                return Ok(1);
            }
            println!("ok");
        }
        Command::Compare(a) => {
            let dataset_dir = a.out.with_extension("runs");
            let mut logs = Vec::new();
            for mode in ["resgs", "baseline"] {
                let mut overrides = a.run.overrides.clone();
                overrides.push(format!("preset = \"{mode}\""));
                let cfg = load_config(a.run.config.as_deref(), &overrides)?;
                let (_, log) = run_training(&a.run, &cfg, &dataset_dir.join(mode), false)?;
                logs.push((mode, log));
            }
            let runs: Vec<(&str, &RunLog)> = logs.iter().map(|(m, l)| (*m, l)).collect();
            write_compare(&runs, create(&a.out)?)?;
            println!("wrote {}", a.out.display());
        }
    }
    Ok(0)
}

/// Run the command line; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cli)),
            Err(e) => Err(Error::Usage(format!("thread pool: {e}"))),
        },
        None => execute(cli),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}
