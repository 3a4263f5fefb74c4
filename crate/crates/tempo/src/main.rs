extern crate blas_src;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tempo::config::RunConfig;
use tempo::runner;

#[derive(Parser)]
#[command(name = "tempo", about = "Tensor-network open-system dynamics")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Assert that the run involves no randomness (it never does; this
    /// flag records the guarantee in the summary).
    #[arg(long, global = true)]
    seedless: bool,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Propagate a single configuration and write trajectory + summary.
    Run,
    /// Repeat the run over the values in the [sweep] block.
    Sweep,
    /// Fit the convergence order across the [sweep] values (at least 3).
    Converge,
    /// Compare the tensor-network result against an independent oracle.
    OracleCheck,
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    let path = path
        .as_ref()
        .context("--config PATH is required for this verb")?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    RunConfig::from_toml(&text).map_err(Into::into)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.config)?;
    match cli.verb {
        Verb::Run => {
            let result = runner::run_config(&cfg)?;
            let mut summary = runner::summary_text(&result);
            if cli.seedless {
                summary.push_str("seedless = true\n");
            }
            let summary_name = cfg.output.summary.as_deref().unwrap_or("summary.txt");
            let path = write_out(&cli.out, summary_name, &summary)?;
            println!("wrote {}", path.display());
            if !result.trajectory.is_empty() {
                let csv = runner::trajectory_csv(&result);
                let csv_name = cfg
                    .output
                    .trajectory_csv
                    .as_deref()
                    .unwrap_or("trajectory.csv");
                let path = write_out(&cli.out, csv_name, &csv)?;
                println!("wrote {}", path.display());
            }
            print!("{summary}");
        }
        Verb::Sweep => {
            if cfg.sweep.is_none() {
                bail!("sweep verb requires a [sweep] block in the config");
            }
            let rows = runner::run_sweep(&cfg, cli.workers)?;
            let csv = runner::sweep_csv(&rows);
            let path = write_out(&cli.out, "sweep.csv", &csv)?;
            println!("wrote {}", path.display());
            let failures = rows.iter().filter(|r| r.error.is_some()).count();
            println!("points = {}, failures = {failures}", rows.len());
        }
        Verb::Converge => {
            let report = runner::convergence_report(&cfg, cli.workers)?;
            let path = write_out(&cli.out, "convergence.txt", &report)?;
            println!("wrote {}", path.display());
            print!("{report}");
        }
        Verb::OracleCheck => {
            let report = runner::oracle_check(&cfg)?;
            let path = write_out(&cli.out, "oracle_check.txt", &report)?;
            println!("wrote {}", path.display());
            print!("{report}");
        }
    }
    Ok(())
}
