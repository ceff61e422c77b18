//! `decunif`: config-driven experiment runner.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical abort (non-
//! finite values or a failed gradient check), 3 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use decunif_cli::commands;

#[derive(Parser)]
#[command(name = "decunif", version, about = "Decoupled uniformity experiment runner")]
struct Cli {
    /// Worker threads, recorded into the resolved config. The current
    /// kernels are single-threaded; the flag tags outputs for the
    /// per-thread-count determinism contract.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder; writes metrics.csv, checkpoint.json, and the
    /// resolved config into --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fill the wall_ms column with real timings (breaks byte-identical
        /// re-runs; off by default).
        #[arg(long)]
        timing: bool,
    },
    /// Compare the analytic pipeline gradient against finite differences.
    GradCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        /// Negate the analytic gradient first; the check must then fail.
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
    /// Report augmentation/kernel/union graph connectivity, write edge lists.
    GraphAnalyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Kernel-graph threshold; omit to skip the kernel and union graphs.
        #[arg(long)]
        eps: Option<f64>,
        /// Rank of the intra-class kernel gap reported as epsilon-star.
        #[arg(long, default_value_t = 100)]
        m: usize,
    },
    /// Verify the loss inequalities for a frozen checkpoint.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linear-probe a frozen checkpoint on the configured train/test split.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train across prior-noise levels and correlate kernel quality with
    /// probe accuracy.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        timing: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are configuration problems (exit 1); help and
            // version requests are successes.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = (|| {
        let threads = cli.threads;
        match &cli.command {
            Command::Train { config, out, timing } => {
                let cfg = commands::load_config(config, threads)?;
                commands::cmd_train(&cfg, out, *timing)
            }
            Command::GradCheck { config, tolerance, inject_sign_flip } => {
                let cfg = commands::load_config(config, threads)?;
                commands::cmd_grad_check(&cfg, *tolerance, *inject_sign_flip)
            }
            Command::GraphAnalyze { config, out, eps, m } => {
                let cfg = commands::load_config(config, threads)?;
                commands::cmd_graph_analyze(&cfg, out, *eps, *m)
            }
            Command::Bounds { config, checkpoint, out } => {
                let cfg = commands::load_config(config, threads)?;
                commands::cmd_bounds(&cfg, checkpoint, out.as_deref())
            }
            Command::Probe { config, checkpoint, out } => {
                let cfg = commands::load_config(config, threads)?;
                commands::cmd_probe(&cfg, checkpoint, out.as_deref())
            }
            Command::Sweep { config, out, timing } => {
                let cfg = commands::load_config(config, threads)?;
                commands::cmd_sweep(&cfg, out, *timing)
            }
        }
    })();

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
