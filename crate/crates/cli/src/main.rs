use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use umbra_core::renderer::{relight, Relight, RenderSettings};
use umbra_core::solver::{compute_metrics, solve, MaskModel, SolveError, CSV_HEADER};
use umbra_core::workbench::config::CameraConfig;
use umbra_core::workbench::{
    generate, load_checkpoint, read_dataset, read_pfm, save_checkpoint, write_dataset, write_pfm, SceneConfig,
};

mod flat;

/// Exit status when the optimizer diverges.
const DIVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "umbra", version, about = "Inverse rendering with unobserved occluders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset from a scene configuration.
    Render(RenderArgs),
    /// Recover environment, material and masks from a dataset.
    Solve(SolveArgs),
    /// Conditioning study of the one-dimensional analogue.
    Flatland(flat::FlatlandArgs),
    /// Compare a checkpoint against the dataset's ground truth.
    Metrics(MetricsArgs),
    /// Re-render a checkpoint, optionally under new illumination.
    Relight(RelightArgs),
}

#[derive(Args)]
struct RenderArgs {
    /// Scene configuration (TOML); the furnace scene when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the orbit camera count.
    #[arg(long)]
    frames: Option<usize>,
    /// Override the orbit image size.
    #[arg(long)]
    size: Option<usize>,
    /// Material and light samples per pixel.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    manifest: PathBuf,
    /// Configuration whose `[solver]` section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Solve without per-frame masks (baseline).
    #[arg(long)]
    no_occluder_model: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for `metrics.csv`; stdout only when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RelightArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Replacement environment (PFM, equirectangular).
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    samples: usize,
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ECLIPSE_THREADS") {
        let n: usize = v.parse().with_context(|| format!("ECLIPSE_THREADS={v:?} is not a count"))?;
        if n > 0 {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
    }
    Ok(())
}

fn config_base(path: &Option<PathBuf>) -> PathBuf {
    path.as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_config(path: &Option<PathBuf>) -> Result<SceneConfig> {
    match path {
        Some(p) => SceneConfig::load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(SceneConfig::default()),
    }
}

fn set_samples(settings: &mut RenderSettings, samples: Option<usize>) {
    if let Some(n) = samples {
        settings.material_samples = n;
        settings.light_samples = n;
    }
}

fn render(args: RenderArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    match &mut cfg.cameras {
        CameraConfig::Orbit { count, size, .. } => {
            *count = args.frames.unwrap_or(*count);
            *size = args.size.unwrap_or(*size);
        }
        CameraConfig::Poses { poses } => {
            if args.frames.is_some_and(|f| f != poses.len()) || args.size.is_some() {
                bail!("--frames/--size only apply to orbit cameras");
            }
        }
    }
    set_samples(&mut cfg.render, args.samples);
    let scene = cfg.build_scene(&config_base(&args.config))?;
    let dataset = generate(&scene, &cfg.render, cfg.seed)?;
    let manifest = write_dataset(&args.out, &dataset)?;
    fs::write(args.out.join("scene.toml"), cfg.to_toml())?;
    println!("wrote {} frames to {}", manifest.frames.len(), args.out.display());
    Ok(())
}

fn solve_cmd(args: SolveArgs) -> Result<ExitCode> {
    let (dataset, _) = read_dataset(&args.manifest).with_context(|| format!("reading {}", args.manifest.display()))?;
    let mut config = load_config(&args.config)?.solver;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(s) = args.steps {
        config.steps = s;
    }
    set_samples(&mut config.render, args.samples);
    if args.no_occluder_model {
        config.mask_model = MaskModel::None;
    }
    fs::create_dir_all(&args.out)?;
    let mut csv = fs::File::create(args.out.join("metrics.csv"))?;
    writeln!(csv, "{CSV_HEADER}")?;
    let ckpt = args.out.join("checkpoint");
    let mut io_error = None;
    let outcome = solve(&dataset, &config, |snap, scene| {
        println!("step {:>6}  loss {:.4e}  env rmse {:.4}", snap.step, snap.loss, snap.env_rmse);
        let r = writeln!(csv, "{}", snap.csv_row())
            .map_err(anyhow::Error::from)
            .and_then(|_| save_checkpoint(&ckpt, scene, &config, snap.step + 1).map_err(Into::into));
        if let Err(e) = r {
            io_error.get_or_insert(e);
        }
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    match outcome {
        Ok(o) => {
            save_checkpoint(&ckpt, &o.scene, &config, config.steps)?;
            let m = compute_metrics(&o.scene, &dataset);
            println!("env rmse {:.5}  relative mse {:.5}  albedo psnr {:.2}", m.env_rmse, m.env_relative_mse, m.albedo_psnr);
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ SolveError::Diverged { .. }) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(DIVERGED))
        }
        Err(e) => Err(e.into()),
    }
}

fn metrics_cmd(args: MetricsArgs) -> Result<()> {
    let (dataset, _) = read_dataset(&args.manifest)?;
    let (scene, _) = load_checkpoint(&args.checkpoint, &dataset)?;
    let m = compute_metrics(&scene, &dataset);
    let corr = m.mask_correlation.map_or(String::new(), |c| c.to_string());
    let row = format!("{},{},{},{}", m.env_rmse, m.env_relative_mse, m.albedo_psnr, corr);
    let header = "env_rmse,env_relative_mse,albedo_psnr,mask_correlation";
    println!("{header}\n{row}");
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("metrics.csv"), format!("{header}\n{row}\n"))?;
        let mut pairs = String::from("frame,mask_l1,blocked_energy\n");
        for (t, (e, b)) in m.mask_pairs.iter().enumerate() {
            pairs += &format!("{t},{e},{b}\n");
        }
        fs::write(dir.join("mask_pairs.csv"), pairs)?;
    }
    Ok(())
}

fn relight_cmd(args: RelightArgs) -> Result<()> {
    let (dataset, _) = read_dataset(&args.manifest)?;
    let (scene, _) = load_checkpoint(&args.checkpoint, &dataset)?;
    let environment = match &args.env {
        Some(p) => {
            let im = read_pfm(p).with_context(|| format!("reading {}", p.display()))?;
            Some((im.height, im.width, im.pixels))
        }
        None => None,
    };
    let with = Relight {
        environment,
        ..Default::default()
    };
    let settings = RenderSettings {
        material_samples: args.samples,
        light_samples: args.samples,
        aa_passes: 4,
        ..Default::default()
    };
    fs::create_dir_all(&args.out)?;
    for t in 0..scene.cameras.len() {
        let im = relight(&scene, t, &with, &settings, args.seed)?;
        write_pfm(args.out.join(format!("relit_{t:03}.pfm")), &im)?;
    }
    println!("relit {} frames into {}", scene.cameras.len(), args.out.display());
    Ok(())
}

fn run() -> Result<ExitCode> {
    configure_threads()?;
    match Cli::parse().command {
        Command::Render(a) => render(a)?,
        Command::Solve(a) => return solve_cmd(a),
        Command::Flatland(a) => return flat::run(a),
        Command::Metrics(a) => metrics_cmd(a)?,
        Command::Relight(a) => relight_cmd(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
