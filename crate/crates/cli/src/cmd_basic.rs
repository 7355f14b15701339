//! `generate`, `train`, and `verify-bias`.

use crate::config::ExperimentConfig;
use crate::{io_fail, Fail};
use clap::Args;
use dln_core::bias::{min_l1_interpolator, solve_implicit_bias, BiasProblem, SolutionJson};
use dln_core::data::{load_dataset, make_gaussian_dataset, save_dataset, Dataset};
use dln_core::linalg::{norm_l1, norm_linf};
use dln_core::mirror::{LedgerDump, MirrorLedger};
use dln_core::rng::RngStream;
use dln_core::train::{
    default_stepsize, train, write_trajectory_csv, RunStatus, TrainConfig, DEFAULT_STEPSIZE_C,
};
use serde_json::json;
use std::path::{Path, PathBuf};

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Fail> {
    let text = serde_json::to_string_pretty(value).expect("json");
    std::fs::write(path, text).map_err(|e| io_fail(e, &path.display().to_string()))
}

fn read_json(path: &Path) -> Result<serde_json::Value, Fail> {
    let text =
        std::fs::read_to_string(path).map_err(|e| io_fail(e, &path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| Fail::Io(format!("{}: {e}", path.display())))
}

pub fn load_ds(path: &str) -> Result<Dataset, Fail> {
    load_dataset(Path::new(path)).map_err(Fail::from)
}

// ── generate ─────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct GenerateArgs {
    /// Config file with key=value lines (flags override it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample count
    #[arg(long)]
    n: Option<usize>,
    /// Feature dimension
    #[arg(long)]
    d: Option<usize>,
    /// Sparsity of the ground truth
    #[arg(long)]
    s: Option<usize>,
    /// Input mean (per coordinate)
    #[arg(long)]
    mean: Option<f64>,
    /// Input standard deviation
    #[arg(long)]
    sigma: Option<f64>,
    /// Generation seed
    #[arg(long)]
    seed: Option<u64>,
    /// Magnitude of the non-zero truth entries
    #[arg(long)]
    truth_scale: Option<f64>,
    /// Output dataset file
    #[arg(long)]
    out: Option<PathBuf>,
}

const GENERATE_KEYS: &[&str] = &["n", "d", "s", "mean", "sigma", "seed", "truth_scale", "out"];

pub fn run_generate(a: GenerateArgs) -> Result<u8, Fail> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(),
    };
    if let Some(v) = a.n {
        cfg.set("n", v);
    }
    if let Some(v) = a.d {
        cfg.set("d", v);
    }
    if let Some(v) = a.s {
        cfg.set("s", v);
    }
    if let Some(v) = a.mean {
        cfg.set("mean", v);
    }
    if let Some(v) = a.sigma {
        cfg.set("sigma", v);
    }
    if let Some(v) = a.seed {
        cfg.set("seed", v);
    }
    if let Some(v) = a.truth_scale {
        cfg.set("truth_scale", v);
    }
    if let Some(v) = &a.out {
        cfg.set("out", v.display());
    }
    cfg.set_if_absent("mean", 0.0);
    cfg.set_if_absent("sigma", 1.0);
    cfg.set_if_absent("truth_scale", 1.0);
    cfg.set_if_absent("seed", 0);
    cfg.reject_unknown(GENERATE_KEYS)?;

    let n: usize = cfg.get_parsed("n")?;
    let d: usize = cfg.get_parsed("d")?;
    let s: usize = cfg.get_parsed("s")?;
    let mean: f64 = cfg.get_parsed("mean")?;
    let sigma: f64 = cfg.get_parsed("sigma")?;
    let seed: u64 = cfg.get_parsed("seed")?;
    let truth_scale: f64 = cfg.get_parsed("truth_scale")?;
    let out = PathBuf::from(cfg.require("out")?);

    let mut rng = RngStream::new(seed);
    let ds = make_gaussian_dataset(n, d, s, mean, sigma, truth_scale, &mut rng)?;
    save_dataset(&ds, &out)?;
    let cfg_path = out.with_extension(
        out.extension()
            .map(|e| format!("{}.config", e.to_string_lossy()))
            .unwrap_or_else(|| "config".into()),
    );
    std::fs::write(&cfg_path, format!("# hash={}\n{}", cfg.hash(), cfg.print()))
        .map_err(|e| io_fail(e, &cfg_path.display().to_string()))?;
    Ok(0)
}

// ── train ────────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset file
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Uniform neuron initialisation scale
    #[arg(long)]
    alpha: Option<f64>,
    /// Constant step size
    #[arg(long)]
    gamma: Option<f64>,
    /// Use the safe default step size c/(L·B)
    #[arg(long)]
    gamma_auto: bool,
    /// Batch size (default: n, i.e. full-batch GD)
    #[arg(long)]
    b: Option<usize>,
    /// Batch-sampling seed
    #[arg(long)]
    seed: Option<u64>,
    /// Step engine: wpm | uv
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    stop_loss: Option<f64>,
    #[arg(long)]
    diverge_factor: Option<f64>,
    /// Record stride for trajectory.csv (default max_iters/10000)
    #[arg(long)]
    record_every: Option<usize>,
    /// Constant c in the default step-size rule
    #[arg(long)]
    stepsize_c: Option<f64>,
    /// Include beta columns in trajectory.csv
    #[arg(long)]
    beta_columns: bool,
    /// Track the mirror-identity residual each step
    #[arg(long)]
    track_md: Option<bool>,
}

const TRAIN_KEYS: &[&str] = &[
    "data",
    "out",
    "alpha",
    "gamma",
    "gamma_auto",
    "b",
    "seed",
    "engine",
    "max_iters",
    "stop_loss",
    "diverge_factor",
    "record_every",
    "stepsize_c",
    "beta_columns",
    "track_md",
];

pub fn run_train(a: TrainArgs) -> Result<u8, Fail> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(),
    };
    if let Some(v) = &a.data {
        cfg.set("data", v.display());
    }
    if let Some(v) = &a.out {
        cfg.set("out", v.display());
    }
    if let Some(v) = a.alpha {
        cfg.set("alpha", v);
    }
    if let Some(v) = a.gamma {
        cfg.set("gamma", v);
    }
    if a.gamma_auto {
        cfg.set("gamma_auto", true);
    }
    if let Some(v) = a.b {
        cfg.set("b", v);
    }
    if let Some(v) = a.seed {
        cfg.set("seed", v);
    }
    if let Some(v) = &a.engine {
        cfg.set("engine", v);
    }
    if let Some(v) = a.max_iters {
        cfg.set("max_iters", v);
    }
    if let Some(v) = a.stop_loss {
        cfg.set("stop_loss", v);
    }
    if let Some(v) = a.diverge_factor {
        cfg.set("diverge_factor", v);
    }
    if let Some(v) = a.record_every {
        cfg.set("record_every", v);
    }
    if let Some(v) = a.stepsize_c {
        cfg.set("stepsize_c", v);
    }
    if a.beta_columns {
        cfg.set("beta_columns", true);
    }
    if let Some(v) = a.track_md {
        cfg.set("track_md", v);
    }
    cfg.set_if_absent("alpha", 0.1);
    cfg.set_if_absent("seed", 0);
    cfg.set_if_absent("engine", "wpm");
    cfg.set_if_absent("gamma_auto", false);
    cfg.set_if_absent("beta_columns", false);
    cfg.set_if_absent("track_md", true);
    cfg.set_if_absent("stepsize_c", DEFAULT_STEPSIZE_C);
    cfg.reject_unknown(TRAIN_KEYS)?;

    let ds = load_ds(cfg.require("data")?)?;
    cfg.set_if_absent("b", ds.n);
    let out = PathBuf::from(cfg.require("out")?);
    let alpha_scale: f64 = cfg.get_parsed("alpha")?;
    let alpha = vec![alpha_scale; ds.d];
    let b: usize = cfg.get_parsed("b")?;
    let gamma_auto: bool = cfg.get_parsed("gamma_auto")?;
    let stepsize_c: f64 = cfg.get_parsed("stepsize_c")?;
    let gamma = if gamma_auto {
        let l1 = min_l1_interpolator(&ds)?;
        default_stepsize(&ds, b, &alpha, &l1, stepsize_c)?
    } else {
        cfg.get_parsed::<f64>("gamma")
            .map_err(|_| "need --gamma or --gamma-auto".to_string())?
    };

    let mut tc = TrainConfig::new(alpha, gamma, b, cfg.get_parsed("seed")?);
    if let Some(v) = cfg.get_parsed_opt::<usize>("max_iters")? {
        tc.max_iters = v;
    }
    if let Some(v) = cfg.get_parsed_opt::<f64>("stop_loss")? {
        tc.stop_loss = v;
    }
    if let Some(v) = cfg.get_parsed_opt::<f64>("diverge_factor")? {
        tc.diverge_factor = v;
    }
    if let Some(v) = cfg.get_parsed_opt::<usize>("record_every")? {
        tc.record_every = Some(v);
    }
    tc.engine = cfg.require("engine")?.to_string();
    tc.track_md_residual = cfg.get_parsed("track_md")?;

    cfg.echo_into(&out).map_err(|e| io_fail(e, "config.resolved"))?;
    let traj = train(&ds, &tc)?;

    write_trajectory_csv(
        &traj,
        &out.join("trajectory.csv"),
        cfg.get_parsed("beta_columns")?,
        Some(&cfg.hash()),
    )?;

    let converged = traj.status == RunStatus::Converged;
    let limits_ok = converged && !traj.ledger.is_degenerate();
    if limits_ok {
        let dump = traj.ledger.to_dump()?;
        let text = serde_json::to_string_pretty(&dump).expect("ledger json");
        std::fs::write(out.join("ledger.json"), text).map_err(|e| io_fail(e, "ledger.json"))?;
    }
    let md_res = if traj.stats.md_residual_tracked {
        json!(traj.stats.md_residual_max)
    } else {
        serde_json::Value::Null
    };
    let summary = json!({
        "status": traj.status,
        "iters": traj.stats.iters,
        "gamma": gamma,
        "gamma_auto": gamma_auto,
        "b": b,
        "seed": tc.seed,
        "alpha": alpha_scale,
        "engine": tc.engine,
        "initial_loss": traj.stats.initial_loss,
        "final_loss": traj.stats.final_loss,
        "gain_l1": if limits_ok { json!(norm_l1(&traj.ledger.gain())) } else { serde_json::Value::Null },
        "md_residual_max": md_res,
        "max_step_grad_inf": traj.stats.max_step_grad_inf,
        "step_bound_held": traj.stats.step_bound_held,
        "oscillation_fraction": traj.stats.oscillation_fraction,
        "degenerate_zero": traj.stats.degenerate_zero,
        "beta": traj.final_state.beta,
        "data": cfg.require("data")?,
        "config_hash": cfg.hash(),
    });
    write_json(&out.join("summary.json"), &summary)?;

    Ok(match traj.status {
        RunStatus::Converged => 0,
        RunStatus::Diverged => 10,
        RunStatus::MaxIters => 11,
    })
}

// ── verify-bias ──────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory produced by `train`
    #[arg(long)]
    run: Option<PathBuf>,
    /// Pass tolerance on ‖β_trained − β_solver‖∞
    /// (default: 1e-6·‖β*_sparse‖∞ when the dataset has a truth)
    #[arg(long)]
    tol: Option<f64>,
    /// Override the dataset path recorded in the run
    #[arg(long)]
    data: Option<PathBuf>,
}

const VERIFY_KEYS: &[&str] = &["run", "tol", "data"];

pub fn run_verify(a: VerifyArgs) -> Result<u8, Fail> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(),
    };
    if let Some(v) = &a.run {
        cfg.set("run", v.display());
    }
    if let Some(v) = a.tol {
        cfg.set("tol", v);
    }
    if let Some(v) = &a.data {
        cfg.set("data", v.display());
    }
    cfg.reject_unknown(VERIFY_KEYS)?;

    let run_dir = PathBuf::from(cfg.require("run")?);
    let run_cfg = ExperimentConfig::load(&run_dir.join("config.resolved"))
        .map_err(|e| Fail::Io(format!("run config: {e}")))?;
    let data_path = match cfg.get("data") {
        Some(p) => p.to_string(),
        None => run_cfg.require("data")?.to_string(),
    };
    let ds = load_ds(&data_path)?;

    let summary = read_json(&run_dir.join("summary.json"))?;
    if summary["status"] != json!("Converged") {
        return Err(Fail::Usage(format!(
            "run status is {}, need a Converged run",
            summary["status"]
        )));
    }
    let beta_trained: Vec<f64> = summary["beta"]
        .as_array()
        .ok_or_else(|| Fail::Io("summary.json: missing beta".into()))?
        .iter()
        .map(|v| v.as_f64().unwrap_or(f64::NAN))
        .collect();
    if beta_trained.len() != ds.d {
        return Err(Fail::Usage("trained beta dimension mismatch".into()));
    }

    let dump: LedgerDump = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("ledger.json"))
            .map_err(|e| io_fail(e, "ledger.json"))?,
    )
    .map_err(|e| Fail::Io(format!("ledger.json: {e}")))?;
    let ledger = MirrorLedger::from_dump(&dump)?;

    let tol = match cfg.get_parsed_opt::<f64>("tol")? {
        Some(t) => t,
        None => {
            let truth = ds.sparse_truth.as_ref().ok_or_else(|| {
                Fail::Usage("dataset has no sparse truth; pass --tol explicitly".into())
            })?;
            1e-6 * norm_linf(truth)
        }
    };

    let problem = BiasProblem::from_ledger(&ds, &ledger)?;
    let sol = solve_implicit_bias(&problem).map_err(Fail::from)?;
    let dist_inf: f64 = beta_trained
        .iter()
        .zip(&sol.beta_star)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let pass = dist_inf <= tol;

    let l1ref = min_l1_interpolator(&ds)?;
    let sol_json = SolutionJson::new(&sol, &l1ref);
    std::fs::write(
        run_dir.join("solution.json"),
        serde_json::to_string_pretty(&sol_json).expect("json"),
    )
    .map_err(|e| io_fail(e, "solution.json"))?;
    let verdict = json!({
        "pass": pass,
        "dist_inf": dist_inf,
        "tol": tol,
        "kkt_residual": sol.kkt_residual,
        "interp_residual": sol.interp_residual,
        "newton_iters": sol.newton_iters,
        "data": data_path,
    });
    write_json(&run_dir.join("verdict.json"), &verdict)?;
    println!(
        "{}: |beta_trained - beta_solver|_inf = {dist_inf:.3e} (tol {tol:.3e})",
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Ok(0)
    } else {
        Err(Fail::VerifyFail)
    }
}
