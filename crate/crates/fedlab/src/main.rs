use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedlab::compare::compare_runs;
use fedlab::config::ExperimentConfig;
use fedlab::exec::PoolExecutor;
use fedlab::format::write_atomic;
use fedlab::run::{generate_data, run_experiment, run_probe, RunOptions};
use fedlab::{Result, RunError};

/// Deterministic federated-learning simulator.
#[derive(Parser)]
#[command(name = "fedlab", version)]
struct Cli {
    /// Worker threads; never changes results.
    #[arg(long, global = true, env = "FEDLAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured blob dataset as train.fds / test.fds.
    GenData(Common),
    /// Train and write metrics.json, curves.csv and checkpoints.
    Run(Common),
    /// Compare finished runs at matched communication cost.
    Compare {
        /// metrics.json files; the first is the reference.
        metrics: Vec<PathBuf>,
        /// Also write comparison.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-client encoder exchange probe; writes probes.json.
    Probe(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, RunOptions)> {
    let cfg = ExperimentConfig::load(&common.config)?;
    let opts = RunOptions {
        out: common.out.clone(),
        seed: common.seed,
    };
    Ok((cfg, opts))
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(common) => {
            let (cfg, opts) = load(&common)?;
            let (a, b) = generate_data(cfg, &opts)?;
            println!("wrote {} and {}", a.display(), b.display());
        }
        Command::Run(common) => {
            let (cfg, opts) = load(&common)?;
            let exec = PoolExecutor::new(cli.threads)?;
            let report = run_experiment(cfg, &opts, &exec)?;
            let s = &report.metrics.summary;
            println!(
                "final accuracy {}  total cost {:.0} params  rounds {}  -> {}",
                s.final_accuracy
                    .map_or_else(|| "-".into(), |a| format!("{a:.4}")),
                s.total_cost,
                s.evaluated_rounds,
                report.out_dir.display()
            );
        }
        Command::Compare { metrics, out } => {
            let cmp = compare_runs(&metrics)?;
            for w in &cmp.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", cmp.to_text());
            if let Some(dir) = out {
                write_atomic(&dir.join("comparison.csv"), &cmp.to_csv()?)?;
            }
        }
        Command::Probe(common) => {
            let (cfg, opts) = load(&common)?;
            let (path, file) = run_probe(cfg, &opts)?;
            let r = &file.report;
            for i in 0..2 {
                println!(
                    "client {i}: own {:.4}  exchanged {:.4}",
                    r.own[i].loss, r.exchanged[i].loss
                );
            }
            println!(
                "combined: encoder 0 {:.4}  encoder 1 {:.4}  concatenated {:.4}",
                r.single[0].loss, r.single[1].loss, r.concat.loss
            );
            println!("-> {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                RunError::Core(core) if core.is_numeric() => {
                    eprintln!("error: numeric failure: {core}")
                }
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
