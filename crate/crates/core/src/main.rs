use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};

use illumsplat::error::Error;
use illumsplat::harness::gradcheck::{gradcheck, GradcheckOptions};
use illumsplat::harness::{ablate, chamfer, evaluation_points, train, RunConfig};
use illumsplat::splat::{ply, GaussianCloud};
use illumsplat::synth::Dataset;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "illumsplat", version, about = "Illumination-robust Gaussian splatting on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a perturbed multi-view dataset.
    Gen(Common),
    /// Train one configuration and write its report and checkpoints.
    Train(Common),
    /// Chamfer distance of a checkpoint or point file against reference points.
    Eval(EvalArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
    /// Train the four ablation variants and write a combined CSV.
    Ablate(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set loss.threshold=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for scene, perturbation and training randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Training iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Gaussian checkpoint to sample points from.
    #[arg(long, conflicts_with = "points", required_unless_present = "points")]
    checkpoint: Option<PathBuf>,
    /// PLY point set to evaluate directly.
    #[arg(long)]
    points: Option<PathBuf>,
    /// PLY reference points; the configured scene's ground truth when omitted.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Number of randomized fixture seeds.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg = cfg.with_overrides(&self.overrides)?;
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(n) = self.iters {
            cfg.train.iterations = n;
        }
        if let Some(dir) = &self.out {
            cfg.output.dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_timing(dir: &Path, seconds: f64) -> Result<(), Error> {
    std::fs::write(dir.join("timing.json"), format!("{{\n  \"wall_clock_seconds\": {seconds:.3}\n}}\n"))?;
    Ok(())
}

fn run(command: Command) -> Result<u8, Error> {
    match command {
        Command::Gen(c) => {
            let cfg = c.resolve()?;
            let r = &cfg.render;
            let dataset = Dataset::generate(cfg.scene.build()?, &cfg.perturb.effective(), r.views, r.width, r.height)?;
            dataset.write(&cfg.output.dir)?;
            println!("wrote {} views to {}", dataset.views.len(), cfg.output.dir.display());
        }
        Command::Train(c) => {
            let cfg = c.resolve()?;
            let start = Instant::now();
            let report = train(&cfg, "train")?;
            write_timing(&cfg.output.dir, start.elapsed().as_secs_f64())?;
            println!(
                "chamfer {:.6} -> {:.6} ({} iterations, report in {})",
                report.initial_chamfer,
                report.final_chamfer,
                cfg.train.iterations,
                cfg.output.dir.display()
            );
        }
        Command::Eval(e) => {
            let cfg = e.common.resolve()?;
            let points = match (&e.checkpoint, &e.points) {
                (Some(ckpt), _) => {
                    let cloud = GaussianCloud::load(ckpt)?;
                    evaluation_points(&cloud, &cfg.train)?
                }
                (None, Some(p)) => ply::read_ply(p)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let reference = match &e.reference {
                Some(p) => ply::read_ply(p)?,
                None => cfg.scene.build()?.gt_points,
            };
            println!("{}", chamfer(&points, &reference)?);
        }
        Command::Gradcheck(g) => {
            let report = gradcheck(&GradcheckOptions {
                seeds: (0..g.seeds).collect(),
                ..GradcheckOptions::default()
            });
            print!("{report}");
            if !report.passed() {
                return Ok(EXIT_CHECK_FAILED);
            }
        }
        Command::Ablate(c) => {
            let cfg = c.resolve()?;
            let start = Instant::now();
            let reports = ablate(&cfg)?;
            write_timing(&cfg.output.dir, start.elapsed().as_secs_f64())?;
            for r in &reports {
                println!("{:<12} {:.6}", r.label, r.final_chamfer);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e @ Error::NumericAbort { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_NUMERIC)
        }
        Err(e) => {
            eprintln!("error: {e}\n");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(EXIT_USAGE)
        }
    }
}
