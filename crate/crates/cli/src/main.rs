//! `bernquant`: drives the one-bit Bernstein pipeline from the shell.
//!
//! A run is described by a JSON config file, a handful of flags that
//! override single fields, or both. Subcommands expose the pipeline
//! stage by stage (`coeffs`, `quantize`, `build`, `eval`) and as whole
//! certified sweeps (`verify`, `rates`, `report`).
//!
//! Exit codes: 0 on success, 2 for anything wrong with the input
//! (config, shapes, domains, file formats), 3 when the run itself
//! overflowed (coefficients outside the one-bit range, or the
//! quantizer state escaping its stability bound).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod tensor_io;

use config::CliError;

#[derive(Parser)]
#[command(name = "bernquant", version, about = "One-bit Bernstein networks: sample, quantize, compile, certify")]
struct Cli {
    /// JSON config file; explicit flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Basis degree.
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Smoothness order; sets both the smoothing depth and the
    /// quantizer order.
    #[arg(long, global = true)]
    s: Option<u32>,

    /// Coefficient margin in (0, 1).
    #[arg(long, global = true)]
    mu: Option<f64>,

    /// Network activation: quad or relu.
    #[arg(long, global = true)]
    activation: Option<String>,

    /// Quantization direction, 1-based.
    #[arg(long, global = true)]
    ell: Option<usize>,

    /// Points per axis for error grids.
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Directory for emitted artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the function, smooth it, and write the coefficient tensor.
    Coeffs,
    /// Quantize a coefficient tensor to one-bit signs with stability stats.
    Quantize {
        /// Coefficient tensor file (default: <out>/coeffs.bqt).
        #[arg(long, value_name = "FILE")]
        coeffs: Option<PathBuf>,
    },
    /// Compile a sign tensor into a quantized network file.
    Build {
        /// Sign tensor file (default: <out>/signs.bqt).
        #[arg(long, value_name = "FILE")]
        signs: Option<PathBuf>,
        /// Accuracy budget for the relu compilation (default (n+1)^-d n^-s/2).
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Evaluate a network file at points of the unit cube.
    Eval {
        /// Network file (default: <out>/net.qnn).
        #[arg(long, value_name = "FILE")]
        net: Option<PathBuf>,
        /// Evaluation point as comma-separated coordinates; repeatable.
        #[arg(long = "point", value_name = "X1,..,XD", required = true)]
        points: Vec<String>,
    },
    /// Run the pipeline across the degree sweep; write a JSON report
    /// and a CSV error table.
    Verify,
    /// Fit decay rates for each error component across the sweep.
    Rates,
    /// Run once at the configured degree and print a summary; persists
    /// the network and the report.
    Report,
}

fn thread_cap() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("BERNQUANT_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.parse().map_err(|_| {
        CliError::validation(format!(
            "BERNQUANT_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    if threads == 0 {
        return Err(CliError::validation(
            "BERNQUANT_THREADS must be at least 1",
        ));
    }
    // A second initialization (tests in one process) is harmless; the
    // first pool wins.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    thread_cap()?;
    let overrides = config::Overrides {
        n: cli.n,
        s: cli.s,
        mu: cli.mu,
        activation: cli.activation,
        ell: cli.ell,
        grid: cli.grid,
        out: cli.out,
    };
    let cfg = config::load(cli.config.as_deref(), overrides)?;
    match cli.command {
        Command::Coeffs => commands::coeffs(&cfg),
        Command::Quantize { coeffs } => commands::quantize(&cfg, coeffs.as_deref()),
        Command::Build { signs, eps } => commands::build(&cfg, signs.as_deref(), eps),
        Command::Eval { net, points } => commands::eval(&cfg, net.as_deref(), &points),
        Command::Verify => commands::verify(&cfg),
        Command::Rates => commands::rates(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
