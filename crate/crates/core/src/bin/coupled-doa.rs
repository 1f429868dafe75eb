use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use coupled_doa::bench::{estimate_snapshots, run_sweep, write_outputs, ExperimentConfig, Method};
use coupled_doa::estimators::write_spectrum_csv;
use coupled_doa::scene::{simulate, Snapshots};
use coupled_doa::{Error, Result};

#[derive(Parser)]
#[command(name = "coupled-doa", version, about = "Sparse Bayesian DOA estimation under unknown mutual coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene and write its snapshots as JSON.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one estimator on a snapshot file.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: Method,
        /// Number of targets; defaults to the value stored with the snapshots.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>` with a `.spectrum.csv` extension.
        #[arg(long)]
        spectrum_out: Option<PathBuf>,
        /// Experiment config supplying hyperparameters and the MUSIC grid step.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a Monte-Carlo experiment and write reports.csv, summary.csv and winrates.csv.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write only the spatial spectrum of one estimator.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let snaps = simulate(&cfg.scene, seed.unwrap_or(cfg.scene.seed))?;
            snaps.save_json(&out)?;
            println!("targets (deg): {:?}", snaps.scene.thetas_deg);
        }
        Command::Estimate { input, method, k, out, spectrum_out, config } => {
            let cfg = load_config(config.as_deref())?;
            let snaps = Snapshots::load_json(&input)?;
            let res = estimate_snapshots(&cfg, method, &snaps, k)?;
            res.save_json(&out)?;
            res.write_spectrum_csv(spectrum_out.unwrap_or_else(|| out.with_extension("spectrum.csv")))?;
            println!("{} DOAs (deg): {:?}", res.method, res.doas_deg);
        }
        Command::Bench { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out
                .or_else(|| cfg.output_path.as_ref().map(PathBuf::from))
                .ok_or_else(|| Error::InvalidConfig("no output directory: pass --out or set output_path".into()))?;
            let reports = run_sweep(&cfg)?;
            let agg = write_outputs(&dir, &reports)?;
            for s in &agg.summaries {
                let value = s.sweep_value.map(|v| format!(" @ {v}")).unwrap_or_default();
                println!("{}{value}: median {:.2} dB over {} trials", s.method.name(), s.median_db, s.trials);
            }
        }
        Command::Spectrum { input, method, k, out, config } => {
            let cfg = load_config(config.as_deref())?;
            let snaps = Snapshots::load_json(&input)?;
            let res = estimate_snapshots(&cfg, method, &snaps, k)?;
            write_spectrum_csv(&out, &res.angles_deg, &res.spectrum)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            if !e.to_string().contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
