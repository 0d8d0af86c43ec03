mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::ExperimentConfig;
use output::RunDir;

/// Monte Carlo experiments on the zeros of the Gaussian entire function and
/// their matching to the square lattice.
#[derive(Parser)]
#[command(name = "zerolattice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Zeros in the window, per trial (zeros.csv).
    Sample,
    /// Mass-balance and Hall checks on random test sets (verify.csv).
    Verify,
    /// Bounded-distance and min-cost matchings with tail fits (displacements.csv, tails.csv).
    Match,
    /// Gradient-flow basins of the zeros (basins.csv).
    Basins,
    /// Variance of linear statistics for GEF zeros and two perturbed lattices (variance.csv, slopes.csv).
    Toys,
    /// Smallest const_c in {4, 9, 16, 25, 36} for which every test set passes (calibrate.csv).
    Calibrate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Verify => "verify",
            Command::Match => "match",
            Command::Basins => "basins",
            Command::Toys => "toys",
            Command::Calibrate => "calibrate",
        }
    }
}

#[derive(Args)]
struct Overrides {
    /// Flat `key = value` file applied before the flags below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Half-width of the analysis window.
    #[arg(long, global = true)]
    window: Option<f64>,
    /// Grid spacing.
    #[arg(long, global = true)]
    grid: Option<f64>,
    #[arg(long = "const-c", global = true)]
    const_c: Option<f64>,
    /// Metric distance bound for admissible zero/lattice pairs.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Output directory [default: $ZEROLATTICE_OUT or ./zerolattice-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Test sets per trial.
    #[arg(long, global = true)]
    sets: Option<usize>,
    /// Half-width of the square holding test-set centers.
    #[arg(long = "set-center", global = true)]
    set_center: Option<f64>,
    /// Sub-cells per side on basin boundaries.
    #[arg(long, global = true)]
    supersample: Option<usize>,
    /// Draws per dilation for `toys`.
    #[arg(long = "toy-trials", global = true)]
    toy_trials: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        take!(seed, trials, window, grid, const_c, threshold, out, sets, set_center, supersample, toy_trials);
    }
}

fn build_config(o: &Overrides) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &o.config {
        cfg.apply_file(path).map_err(|e| e.to_string())?;
    }
    o.apply(&mut cfg);
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run(command: Command, cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<String, Failure> {
    match command {
        Command::Sample => commands::sample(cfg, dir),
        Command::Verify => commands::verify(cfg, dir),
        Command::Match => commands::matching(cfg, dir),
        Command::Basins => commands::basins(cfg, dir),
        Command::Toys => commands::toys(cfg, dir),
        Command::Calibrate => commands::calibrate(cfg, dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(jobs) = cli.overrides.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let name = cli.command.name();
    let mut dir = match RunDir::create(&cfg.out, name) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: cannot create output directory: {e}");
            return ExitCode::from(1);
        }
    };
    let outcome = run(cli.command, &cfg, &mut dir);
    let (status, code) = match &outcome {
        Ok(_) => ("ok".to_string(), 0),
        Err(e) => (format!("failed: {e}"), e.exit_code()),
    };
    if let Err(e) = dir.write_manifest(cfg.echo(), &status, code) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(1);
    }
    match outcome {
        Ok(summary) => {
            println!("{name}: {summary}");
            println!("outputs in {}", dir.path().display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{name}: {e}");
            eprintln!("partial outputs in {}", dir.path().display());
            ExitCode::from(code as u8)
        }
    }
}
