//! `dpopt` — command-line front end for the private-optimization
//! benchmark harness.
//!
//! Config files are flat `key = value` text (see `ExperimentConfig::parse`
//! in `dpopt-core` for the key list); `#` starts a comment. The `DPOPT_SEED`
//! environment variable overrides every seed in the loaded config, which is
//! handy for re-running a deployment with fresh randomness without editing
//! files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dpopt_core::experiment::synthesize_dataset;
use dpopt_core::{
    certify, grid_search, run_experiment, sweep_scaling, Condition, ExperimentConfig, LossModel,
    RngStream,
};

#[derive(Parser)]
#[command(
    name = "dpopt",
    version,
    about = "Differentially private non-convex optimization benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark grid (algorithms x privacy levels x trials) and
    /// write results.csv, summary.csv, and ledger.txt.
    RunExperiment {
        /// Flat `key = value` config file; omitted, the built-in defaults run.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score hyperparameter candidates from the config's `grid.*` lists on
    /// validation data and write the winners to hyperparams.txt.
    GridSearch {
        /// Config file containing at least one `grid.*` entry.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the sample-size scaling sweep (`sweep.*` config keys) and print
    /// the fitted log-log slope.
    Sweep {
        /// Config file; omitted, the built-in sweep defaults run.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for the per-n CSV; omitted, the table prints to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirically check a loss's declared Lipschitz and smoothness
    /// constants by sampling point pairs in a ball.
    Certify {
        /// Loss name: sine_bowl, quadratic_pl, or glm_sigmoid_sq.
        #[arg(long, default_value = "sine_bowl")]
        loss: String,
        /// Radius of the ball the constants are claimed on.
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        /// Number of sampled point pairs per condition.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Dimension of the synthesized dataset.
        #[arg(long, default_value_t = 20)]
        dim: usize,
        /// Rows in the synthesized dataset.
        #[arg(long, default_value_t = 50)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::RunExperiment { config, out } => cmd_run_experiment(config.as_deref(), out),
        Command::GridSearch { config, out } => cmd_grid_search(&config, out),
        Command::Sweep { config, out } => cmd_sweep(config.as_deref(), out),
        Command::Certify {
            loss,
            radius,
            samples,
            dim,
            rows,
            seed,
        } => cmd_certify(&loss, radius, samples, dim, rows, seed),
    }
}

/// Load a config file, or fall back to the defaults when no path is given.
/// `DPOPT_SEED`, when set, overrides both the experiment and sweep seeds.
fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            ExperimentConfig::parse(&text)
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Ok(raw) = std::env::var("DPOPT_SEED") {
        let seed: u64 = raw
            .parse()
            .with_context(|| format!("DPOPT_SEED must be an unsigned integer, got {raw:?}"))?;
        cfg.seed = seed;
        cfg.sweep.seed = seed;
    }
    Ok(cfg)
}

fn resolve_out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Option<PathBuf> {
    out.or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
}

fn cmd_run_experiment(config: Option<&Path>, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    let results = run_experiment(&cfg).context("running the experiment")?;
    print!("{}", results.summary_csv());
    if let Some(dir) = resolve_out_dir(&cfg, out) {
        results
            .write_to(&dir)
            .with_context(|| format!("writing results to {}", dir.display()))?;
        eprintln!(
            "wrote results.csv, summary.csv, ledger.txt to {}",
            dir.display()
        );
    }
    Ok(())
}

fn cmd_grid_search(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(Some(config))?;
    let Some(grid) = cfg.grid.clone() else {
        bail!(
            "config {} has no grid.* entries to search over",
            config.display()
        );
    };
    let selection = grid_search(&cfg, &grid).context("running the grid search")?;
    print!("{}", selection.listing);
    if let Some(dir) = resolve_out_dir(&cfg, out) {
        selection
            .write_to(&dir)
            .with_context(|| format!("writing hyperparams to {}", dir.display()))?;
        eprintln!("wrote hyperparams.txt to {}", dir.display());
    }
    Ok(())
}

fn cmd_sweep(config: Option<&Path>, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    let report = sweep_scaling(&cfg.sweep).context("running the scaling sweep")?;
    print!("{}", report.to_csv());
    println!(
        "slope = {:.4}, r_squared = {:.4}",
        report.slope, report.r_squared
    );
    if let Some(dir) = resolve_out_dir(&cfg, out) {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("sweep.csv");
        std::fs::write(&path, report.to_csv())
            .with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_certify(
    loss_name: &str,
    radius: f64,
    samples: usize,
    dim: usize,
    rows: usize,
    seed: u64,
) -> Result<()> {
    let loss = LossModel::from_name(loss_name)?;
    let stream = RngStream::new(seed, 0);
    let data = synthesize_dataset(&loss, dim, rows, &stream)?;
    let minimizer = loss.analytic_minimizer(&data);
    let mut all_pass = true;
    for condition in [Condition::Lipschitz, Condition::Smooth] {
        let report = certify(
            &loss,
            &data,
            condition,
            radius,
            samples,
            &stream.substream(1),
            minimizer.as_ref().map(|m| m.view()),
        )
        .with_context(|| format!("certifying {}", condition.name()))?;
        let verdict = if report.pass { "PASS" } else { "FAIL" };
        let claimed: Vec<String> = report
            .claimed
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        println!(
            "{}: {} (claimed {}; worst violation {:.3e} over {} samples, tolerance {:.1e})",
            condition.name(),
            verdict,
            claimed.join(", "),
            report.worst_violation,
            report.n_samples,
            report.tolerance,
        );
        all_pass &= report.pass;
    }
    if !all_pass {
        bail!("at least one condition failed certification");
    }
    Ok(())
}
