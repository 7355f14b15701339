//! `dln-lab` — train 2-layer diagonal linear networks with (S)GD, verify the
//! recovered interpolator against the mirror-descent ledger, and emit the
//! scan/shape/concentration reports as plot-ready CSV/JSON.
//!
//! Exit codes: 0 success/converged, 2 invalid flags or config, 3 I/O failure,
//! 10 diverged, 11 iteration budget exhausted, 12 solver failure,
//! 13 verification FAIL.

mod cmd_basic;
mod cmd_reports;
mod config;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dln-lab", version, about)]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a Gaussian sparse-regression dataset file.
    ///
    /// Accepted config keys: n, d, s, mean, sigma, seed, truth_scale, out
    Generate(cmd_basic::GenerateArgs),
    /// Train (S)GD on a dataset; writes trajectory.csv, ledger.json, summary.json.
    ///
    /// Accepted config keys: data, out, alpha, gamma, gamma_auto, b, seed,
    /// engine, max_iters, stop_loss, diverge_factor, record_every,
    /// stepsize_c, beta_columns, track_md
    Train(cmd_basic::TrainArgs),
    /// Solve the implicit-bias problem from a converged run and compare.
    ///
    /// Accepted config keys: run, tol, data
    VerifyBias(cmd_basic::VerifyArgs),
    /// Step-size scan with divergence-threshold bisection.
    ///
    /// Accepted config keys: data, out, b, alpha, seed, grid, stop_loss, budget
    Scan(cmd_reports::ScanArgs),
    /// Gain-magnitude sandwich over seeds.
    ///
    /// Accepted config keys: data, out, b, alpha, gamma, gamma_auto, seed,
    /// seeds, stop_loss, max_iters, slack, stepsize_c
    Gain(cmd_reports::GainArgs),
    /// Initialisation gradient-shape report.
    ///
    /// Accepted config keys: data, out
    Shape(cmd_reports::ShapeArgs),
    /// Concentration bench for one registered inequality.
    ///
    /// Accepted config keys: lemma, trials, seed, out, n, d, s, eps, mu,
    /// sigma, samples
    Conc(cmd_reports::ConcArgs),
    /// Re-emit figure data series (distance-vs-gamma, gain shapes, EoS traces).
    ///
    /// Accepted config keys: which, preset, seed, out
    Figures(cmd_reports::FiguresArgs),
}

/// Failure modes mapped onto the exit-code contract.
pub enum Fail {
    Usage(String),
    Io(String),
    Solver(String),
    VerifyFail,
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Usage(_) => 2,
            Fail::Io(_) => 3,
            Fail::Solver(_) => 12,
            Fail::VerifyFail => 13,
        }
    }
}

impl From<dln_core::CoreError> for Fail {
    fn from(e: dln_core::CoreError) -> Fail {
        use dln_core::CoreError::*;
        match e {
            Io(_) | Parse(_) => Fail::Io(e.to_string()),
            NewtonStalled(_) | SingularJacobian | Infeasible(_) | Unbounded => {
                Fail::Solver(e.to_string())
            }
            _ => Fail::Usage(e.to_string()),
        }
    }
}

impl From<String> for Fail {
    fn from(s: String) -> Fail {
        Fail::Usage(s)
    }
}

pub fn io_fail(e: std::io::Error, what: &str) -> Fail {
    Fail::Io(format!("{what}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let result = match cli.cmd {
        Cmd::Generate(a) => cmd_basic::run_generate(a),
        Cmd::Train(a) => cmd_basic::run_train(a),
        Cmd::VerifyBias(a) => cmd_basic::run_verify(a),
        Cmd::Scan(a) => cmd_reports::run_scan(a),
        Cmd::Gain(a) => cmd_reports::run_gain(a),
        Cmd::Shape(a) => cmd_reports::run_shape(a),
        Cmd::Conc(a) => cmd_reports::run_conc(a),
        Cmd::Figures(a) => cmd_reports::run_figures(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            match &f {
                Fail::Usage(m) => eprintln!("error: {m}"),
                Fail::Io(m) => eprintln!("io error: {m}"),
                Fail::Solver(m) => eprintln!("solver error: {m}"),
                Fail::VerifyFail => eprintln!("verification FAILED"),
            }
            ExitCode::from(f.code())
        }
    }
}
