//! `scan`, `gain`, `shape`, `conc`, and `figures`.

use crate::cmd_basic::load_ds;
use crate::config::ExperimentConfig;
use crate::{io_fail, Fail};
use clap::Args;
use dln_core::analysis::{
    bench_by_name, eos_scan, gain_sandwich, init_gradient_shape, ConcParams, EosScanResult,
};
use dln_core::bias::min_l1_interpolator;
use dln_core::data::{make_gaussian_dataset, Dataset};
use dln_core::rng::RngStream;
use dln_core::train::{default_stepsize, train, RunStatus, TrainConfig, DEFAULT_STEPSIZE_C};
use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Fail> {
    std::fs::write(path, text).map_err(|e| io_fail(e, &path.display().to_string()))
}

fn write_json_file(path: &Path, value: &serde_json::Value) -> Result<(), Fail> {
    write_text(path, &serde_json::to_string_pretty(value).expect("json"))
}

/// Parse `log:LO:HI:COUNT`, `lin:LO:HI:COUNT`, or `list:a,b,c`.
fn parse_grid(spec: &str) -> Result<Vec<f64>, Fail> {
    let bad = |m: &str| Fail::Usage(format!("grid `{spec}`: {m}"));
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| bad("expected log:LO:HI:COUNT, lin:LO:HI:COUNT or list:v1,v2,…"))?;
    match kind {
        "list" => {
            let vals: Result<Vec<f64>, _> = rest.split(',').map(|t| t.trim().parse()).collect();
            vals.map_err(|_| bad("bad number in list"))
        }
        "log" | "lin" => {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(bad("expected LO:HI:COUNT"));
            }
            let lo: f64 = parts[0].parse().map_err(|_| bad("bad LO"))?;
            let hi: f64 = parts[1].parse().map_err(|_| bad("bad HI"))?;
            let count: usize = parts[2].parse().map_err(|_| bad("bad COUNT"))?;
            if count < 2 || !(hi > lo) || (kind == "log" && lo <= 0.0) {
                return Err(bad("need COUNT ≥ 2 and HI > LO (positive for log)"));
            }
            let mut out = Vec::with_capacity(count);
            for i in 0..count {
                let t = i as f64 / (count - 1) as f64;
                out.push(if kind == "log" {
                    (lo.ln() + t * (hi / lo).ln()).exp()
                } else {
                    lo + t * (hi - lo)
                });
            }
            Ok(out)
        }
        _ => Err(bad("unknown grid kind")),
    }
}

// ── scan ─────────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct ScanArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Batch size
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Step-size grid, e.g. log:1e-3:1:40
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    stop_loss: Option<f64>,
    /// Per-run iteration budget for the divergence proxy
    #[arg(long)]
    budget: Option<usize>,
}

const SCAN_KEYS: &[&str] = &["data", "out", "b", "alpha", "seed", "grid", "stop_loss", "budget"];

pub fn run_scan(a: ScanArgs) -> Result<u8, Fail> {
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
    if let Some(v) = a.b {
        cfg.set("b", v);
    }
    if let Some(v) = a.alpha {
        cfg.set("alpha", v);
    }
    if let Some(v) = a.seed {
        cfg.set("seed", v);
    }
    if let Some(v) = &a.grid {
        cfg.set("grid", v);
    }
    if let Some(v) = a.stop_loss {
        cfg.set("stop_loss", v);
    }
    if let Some(v) = a.budget {
        cfg.set("budget", v);
    }
    cfg.set_if_absent("alpha", 0.1);
    cfg.set_if_absent("seed", 0);
    cfg.set_if_absent("stop_loss", 1e-9);
    cfg.reject_unknown(SCAN_KEYS)?;

    let ds = load_ds(cfg.require("data")?)?;
    cfg.set_if_absent("b", 1);
    let out = PathBuf::from(cfg.require("out")?);
    let grid = parse_grid(cfg.require("grid")?)?;
    let mut base = TrainConfig::new(
        vec![cfg.get_parsed("alpha")?; ds.d],
        grid[0],
        cfg.get_parsed("b")?,
        cfg.get_parsed("seed")?,
    );
    base.stop_loss = cfg.get_parsed("stop_loss")?;
    if let Some(budget) = cfg.get_parsed_opt::<usize>("budget")? {
        base.max_iters = budget;
    }
    cfg.echo_into(&out).map_err(|e| io_fail(e, "config.resolved"))?;

    let scan = eos_scan(&ds, &base, &grid)?;
    write_scan_csv(&scan, &out.join("scan.csv"), &cfg.hash())?;
    let summary = json!({
        "gamma_tilde_max": scan.gamma_tilde_max,
        "budget_iters": scan.budget_iters,
        "entries": scan.entries.len(),
        "config_hash": cfg.hash(),
    });
    write_json_file(&out.join("summary.json"), &summary)?;
    if let Some(gt) = scan.gamma_tilde_max {
        println!("gamma_tilde_max = {gt:.6e}");
    } else {
        println!("no divergence inside the grid");
    }
    Ok(0)
}

fn write_scan_csv(scan: &EosScanResult, path: &Path, hash: &str) -> Result<(), Fail> {
    let mut text = format!("# config_hash={hash}\n");
    text.push_str("gamma,status,iters,dist_l1_to_l1min,dist_l2_to_truth,gain_l1,oscillation,max_step_grad_inf\n");
    for e in &scan.entries {
        let _ = writeln!(
            text,
            "{},{:?},{},{},{},{},{},{}",
            fmt17(e.gamma),
            e.status,
            e.iters,
            fmt17(e.dist_l1_to_l1min),
            fmt17(e.dist_l2_to_truth),
            fmt17(e.gain_l1),
            e.oscillation.map_or("".into(), |o| fmt17(o)),
            fmt17(e.max_step_grad_inf),
        );
    }
    write_text(path, &text)
}

// ── gain ─────────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct GainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gamma_auto: bool,
    /// Base batch seed; seeds are base..base+seeds
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    stop_loss: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Allowed standard errors of slack on the sandwich
    #[arg(long)]
    slack: Option<f64>,
    #[arg(long)]
    stepsize_c: Option<f64>,
}

const GAIN_KEYS: &[&str] = &[
    "data", "out", "b", "alpha", "gamma", "gamma_auto", "seed", "seeds", "stop_loss", "max_iters",
    "slack", "stepsize_c",
];

pub fn run_gain(a: GainArgs) -> Result<u8, Fail> {
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
    if let Some(v) = a.b {
        cfg.set("b", v);
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
    if let Some(v) = a.seed {
        cfg.set("seed", v);
    }
    if let Some(v) = a.seeds {
        cfg.set("seeds", v);
    }
    if let Some(v) = a.stop_loss {
        cfg.set("stop_loss", v);
    }
    if let Some(v) = a.max_iters {
        cfg.set("max_iters", v);
    }
    if let Some(v) = a.slack {
        cfg.set("slack", v);
    }
    if let Some(v) = a.stepsize_c {
        cfg.set("stepsize_c", v);
    }
    cfg.set_if_absent("alpha", 0.1);
    cfg.set_if_absent("seed", 0);
    cfg.set_if_absent("seeds", 1);
    cfg.set_if_absent("slack", 3.0);
    cfg.set_if_absent("gamma_auto", false);
    cfg.set_if_absent("stepsize_c", DEFAULT_STEPSIZE_C);
    cfg.reject_unknown(GAIN_KEYS)?;

    let ds = load_ds(cfg.require("data")?)?;
    cfg.set_if_absent("b", ds.n);
    let out = PathBuf::from(cfg.require("out")?);
    let b: usize = cfg.get_parsed("b")?;
    let alpha = vec![cfg.get_parsed::<f64>("alpha")?; ds.d];
    let gamma = if cfg.get_parsed::<bool>("gamma_auto")? {
        let l1 = min_l1_interpolator(&ds)?;
        default_stepsize(&ds, b, &alpha, &l1, cfg.get_parsed("stepsize_c")?)?
    } else {
        cfg.get_parsed::<f64>("gamma")
            .map_err(|_| "need --gamma or --gamma-auto".to_string())?
    };
    let mut base = TrainConfig::new(alpha, gamma, b, cfg.get_parsed("seed")?);
    if let Some(v) = cfg.get_parsed_opt::<f64>("stop_loss")? {
        base.stop_loss = v;
    }
    if let Some(v) = cfg.get_parsed_opt::<usize>("max_iters")? {
        base.max_iters = v;
    }
    cfg.echo_into(&out).map_err(|e| io_fail(e, "config.resolved"))?;

    let rep = gain_sandwich(&ds, &base, cfg.get_parsed("seeds")?, cfg.get_parsed("slack")?)?;
    let mut csv = format!("# config_hash={}\nseed,gain_l1,s,iters\n", cfg.hash());
    for e in &rep.per_seed {
        let _ = writeln!(csv, "{},{},{},{}", e.seed, fmt17(e.gain_l1), fmt17(e.s), e.iters);
    }
    write_text(&out.join("gain_seeds.csv"), &csv)?;
    write_json_file(
        &out.join("gain.json"),
        &serde_json::to_value(&rep).expect("json"),
    )?;
    println!(
        "gain sandwich: {:.4e} ≤ {:.4e} ≤ {:.4e} ({}, {})",
        rep.lhs,
        rep.mean_gain_l1,
        rep.rhs,
        if rep.holds_lo { "lower ok" } else { "LOWER FAILS" },
        if rep.holds_hi { "upper ok" } else { "UPPER FAILS" },
    );
    Ok(0)
}

// ── shape ────────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct ShapeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

const SHAPE_KEYS: &[&str] = &["data", "out"];

pub fn run_shape(a: ShapeArgs) -> Result<u8, Fail> {
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
    cfg.reject_unknown(SHAPE_KEYS)?;
    let ds = load_ds(cfg.require("data")?)?;
    let out = PathBuf::from(cfg.require("out")?);
    cfg.echo_into(&out).map_err(|e| io_fail(e, "config.resolved"))?;

    let rep = init_gradient_shape(&ds)?;
    let support = ds.truth_support().unwrap_or_default();
    let mut csv = format!("# config_hash={}\ncoord,on_support,grad_sq_gd,grad_sq_sgd\n", cfg.hash());
    for j in 0..ds.d {
        let _ = writeln!(
            csv,
            "{j},{},{},{}",
            support.contains(&j) as u8,
            fmt17(rep.grad_sq_gd[j]),
            fmt17(rep.grad_sq_sgd[j])
        );
    }
    write_text(&out.join("shape.csv"), &csv)?;
    write_json_file(
        &out.join("shape.json"),
        &serde_json::to_value(&rep).expect("json"),
    )?;
    println!(
        "on/off-support ratios: GD {:.3}, SGD {:.3}",
        rep.gd_ratio, rep.sgd_ratio
    );
    Ok(0)
}

// ── conc ─────────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct ConcArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Registered lemma bench: rip | ripuncentered | ripsgd |
    /// ripsgduncentered | meanhessian | all
    #[arg(long)]
    lemma: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Sparse test vectors per trial
    #[arg(long)]
    samples: Option<usize>,
}

const CONC_KEYS: &[&str] = &[
    "lemma", "trials", "seed", "out", "n", "d", "s", "eps", "mu", "sigma", "samples",
];

pub fn run_conc(a: ConcArgs) -> Result<u8, Fail> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(),
    };
    if let Some(v) = &a.lemma {
        cfg.set("lemma", v);
    }
    if let Some(v) = a.trials {
        cfg.set("trials", v);
    }
    if let Some(v) = a.seed {
        cfg.set("seed", v);
    }
    if let Some(v) = &a.out {
        cfg.set("out", v.display());
    }
    if let Some(v) = a.n {
        cfg.set("n", v);
    }
    if let Some(v) = a.d {
        cfg.set("d", v);
    }
    if let Some(v) = a.s {
        cfg.set("s", v);
    }
    if let Some(v) = a.eps {
        cfg.set("eps", v);
    }
    if let Some(v) = a.mu {
        cfg.set("mu", v);
    }
    if let Some(v) = a.sigma {
        cfg.set("sigma", v);
    }
    if let Some(v) = a.samples {
        cfg.set("samples", v);
    }
    cfg.reject_unknown(CONC_KEYS)?;
    let lemma = cfg.require("lemma")?.to_string();
    let out = PathBuf::from(cfg.require("out")?);
    cfg.echo_into(&out).map_err(|e| io_fail(e, "config.resolved"))?;

    let names: Vec<String> = if lemma == "all" {
        dln_core::analysis::all_benches()
            .iter()
            .map(|b| b.name().to_string())
            .collect()
    } else {
        vec![lemma]
    };
    let mut reports = Vec::new();
    for name in &names {
        let bench = bench_by_name(name).ok_or_else(|| {
            Fail::Usage(format!(
                "unknown lemma `{name}` (have: {}, all)",
                dln_core::analysis::all_benches()
                    .iter()
                    .map(|b| b.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })?;
        let mut p: ConcParams = bench.default_params();
        if let Some(v) = cfg.get_parsed_opt("trials")? {
            p.trials = v;
        }
        if let Some(v) = cfg.get_parsed_opt("seed")? {
            p.seed = v;
        }
        if let Some(v) = cfg.get_parsed_opt("n")? {
            p.n = v;
        }
        if let Some(v) = cfg.get_parsed_opt("d")? {
            p.d = v;
        }
        if let Some(v) = cfg.get_parsed_opt("s")? {
            p.s = v;
        }
        if let Some(v) = cfg.get_parsed_opt("eps")? {
            p.eps = v;
        }
        if let Some(v) = cfg.get_parsed_opt("mu")? {
            p.mu = v;
        }
        if let Some(v) = cfg.get_parsed_opt("sigma")? {
            p.sigma = v;
        }
        if let Some(v) = cfg.get_parsed_opt("samples")? {
            p.sparse_samples = v;
        }
        let rep = bench.run(&p);
        if !rep.regime_ok {
            eprintln!("warning: {}: outside stated regime — {}", rep.lemma, rep.notes);
        }
        println!(
            "{}: failures {}/{} ({:.1}%)",
            rep.lemma,
            rep.failures,
            rep.trials,
            100.0 * rep.failure_freq
        );
        reports.push(serde_json::to_value(&rep).expect("json"));
    }
    let value = if reports.len() == 1 {
        reports.pop().unwrap()
    } else {
        serde_json::Value::Array(reports)
    };
    write_json_file(&out.join("conc.json"), &value)?;
    Ok(0)
}

// ── figures ──────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct FiguresArgs {
    /// Which figure data to emit: fig1 | fig2 | fig3
    which: String,
    /// Instance preset: paper (n=20,d=30,s=3,α=0.1) | small (n=8,d=12,s=2,α=0.3)
    #[arg(long, default_value = "paper")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Preset {
    ds: Dataset,
    alpha: f64,
    stop_loss: f64,
}

fn build_preset(name: &str, seed: u64) -> Result<Preset, Fail> {
    let (n, d, s, alpha) = match name {
        "paper" => (20, 30, 3, 0.1),
        "small" => (8, 12, 2, 0.3),
        other => return Err(Fail::Usage(format!("unknown preset `{other}`"))),
    };
    let ds = make_gaussian_dataset(n, d, s, 0.0, 1.0, 1.0, &mut RngStream::new(seed))?;
    Ok(Preset {
        ds,
        alpha,
        stop_loss: 1e-9,
    })
}

pub fn run_figures(a: FiguresArgs) -> Result<u8, Fail> {
    let seed = a.seed.unwrap_or(1);
    let out = a
        .out
        .clone()
        .ok_or_else(|| Fail::Usage("need --out".into()))?;
    let mut cfg = ExperimentConfig::new();
    cfg.set("which", &a.which);
    cfg.set("preset", &a.preset);
    cfg.set("seed", seed);
    cfg.set("out", out.display());
    cfg.echo_into(&out).map_err(|e| io_fail(e, "config.resolved"))?;

    let preset = build_preset(&a.preset, seed)?;
    match a.which.as_str() {
        "fig1" => figures_fig1(&preset, &out, &cfg),
        "fig2" => figures_fig2(&preset, &out, &cfg),
        "fig3" => figures_fig3(&preset, &out, &cfg),
        other => Err(Fail::Usage(format!("unknown figure `{other}`"))),
    }
}

fn auto_gamma(p: &Preset, b: usize) -> Result<f64, Fail> {
    let l1 = min_l1_interpolator(&p.ds)?;
    Ok(default_stepsize(
        &p.ds,
        b,
        &vec![p.alpha; p.ds.d],
        &l1,
        DEFAULT_STEPSIZE_C,
    )?)
}

fn scan_for(p: &Preset, b: usize, seed: u64) -> Result<EosScanResult, Fail> {
    let g0 = auto_gamma(p, b)?;
    let grid: Vec<f64> = (0..16)
        .map(|i| g0 * 0.2 * 2.0_f64.powf(i as f64))
        .collect();
    let mut base = TrainConfig::new(vec![p.alpha; p.ds.d], g0, b, seed);
    base.stop_loss = p.stop_loss;
    Ok(eos_scan(&p.ds, &base, &grid)?)
}

/// Distance-to-ℓ₁-min (and truth) vs γ, one series per algorithm.
fn figures_fig1(p: &Preset, out: &Path, cfg: &ExperimentConfig) -> Result<u8, Fail> {
    let mut csv = format!(
        "# config_hash={}\nalgo,gamma,status,iters,dist_l1_to_l1min,dist_l2_to_truth,gain_l1\n",
        cfg.hash()
    );
    for (algo, b) in [("sgd", 1usize), ("gd", p.ds.n)] {
        let scan = scan_for(p, b, 1)?;
        for e in &scan.entries {
            let _ = writeln!(
                csv,
                "{algo},{},{:?},{},{},{},{}",
                fmt17(e.gamma),
                e.status,
                e.iters,
                fmt17(e.dist_l1_to_l1min),
                fmt17(e.dist_l2_to_truth),
                fmt17(e.gain_l1)
            );
        }
    }
    write_text(&out.join("fig1.csv"), &csv)?;
    Ok(0)
}

/// Per-coordinate gain shapes at a large step size plus the initial expected
/// squared gradients; coordinates ordered support-first (the "dashed line"
/// convention of the bar plots).
fn figures_fig2(p: &Preset, out: &Path, cfg: &ExperimentConfig) -> Result<u8, Fail> {
    let support = p.ds.truth_support().unwrap_or_default();
    let d = p.ds.d;
    let mut order: Vec<usize> = support.clone();
    for j in 0..d {
        if !support.contains(&j) {
            order.push(j);
        }
    }
    let shape = init_gradient_shape(&p.ds)?;
    let mut gains = Vec::new();
    for (algo, b) in [("gd", p.ds.n), ("sgd", 1usize)] {
        let scan = scan_for(p, b, 1)?;
        let gt = scan.gamma_tilde_max.ok_or_else(|| {
            Fail::Usage(format!("{algo}: grid never diverged; cannot place the large step"))
        })?;
        // 0.6·γ̃ is safely inside the convergent regime but deep enough in
        // step size for the gain shape to be pronounced
        let mut tc = TrainConfig::new(vec![p.alpha; d], 0.6 * gt, b, 1);
        tc.stop_loss = p.stop_loss;
        tc.max_iters = 20_000_000;
        tc.track_md_residual = false;
        tc.record_every = Some(usize::MAX);
        let traj = train(&p.ds, &tc)?;
        if traj.status != RunStatus::Converged {
            return Err(Fail::Usage(format!(
                "{algo} at 0.6·γ̃ did not converge within budget"
            )));
        }
        gains.push(traj.ledger.gain());
    }
    let mut csv = format!(
        "# config_hash={}\nplot_pos,coord,on_support,gain_gd,gain_sgd,grad_sq_gd,grad_sq_sgd\n",
        cfg.hash()
    );
    for (pos, &j) in order.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{pos},{j},{},{},{},{},{}",
            support.contains(&j) as u8,
            fmt17(gains[0][j]),
            fmt17(gains[1][j]),
            fmt17(shape.grad_sq_gd[j]),
            fmt17(shape.grad_sq_sgd[j])
        );
    }
    write_text(&out.join("fig2.csv"), &csv)?;
    Ok(0)
}

/// Per-coordinate iterate traces near the edge of stability.
fn figures_fig3(p: &Preset, out: &Path, cfg: &ExperimentConfig) -> Result<u8, Fail> {
    for (algo, b) in [("gd", p.ds.n), ("sgd", 1usize)] {
        let scan = scan_for(p, b, 1)?;
        let gt = scan.gamma_tilde_max.ok_or_else(|| {
            Fail::Usage(format!("{algo}: grid never diverged; cannot place 0.8·γ̃"))
        })?;
        // the trace illustrates the oscillating phase; convergence within the
        // budget is not required
        let mut tc = TrainConfig::new(vec![p.alpha; p.ds.d], 0.8 * gt, b, 1);
        tc.stop_loss = p.stop_loss;
        tc.max_iters = 2_000_000;
        tc.track_md_residual = false;
        tc.record_every = Some((tc.max_iters / 1500).max(1));
        let traj = train(&p.ds, &tc)?;
        let mut csv = format!("# config_hash={}\n# gamma={}\nk,loss", cfg.hash(), fmt17(0.8 * gt));
        for j in 0..p.ds.d {
            let _ = write!(csv, ",beta_{j}");
        }
        csv.push('\n');
        for rec in &traj.records {
            let _ = write!(csv, "{},{}", rec.k, fmt17(rec.loss));
            for v in &rec.beta {
                let _ = write!(csv, ",{}", fmt17(*v));
            }
            csv.push('\n');
        }
        write_text(&out.join(format!("fig3_{algo}.csv")), &csv)?;
    }
    Ok(0)
}
