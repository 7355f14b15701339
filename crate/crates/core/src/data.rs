//! Regression instances, losses, gradients, Hessians, deterministic batch
//! sampling and seeded Gaussian data generation.
//!
//! Conventions follow the usual overparametrised-regression setup: the stored
//! design matrix `X` has rows `x_i/√n` and `y` is the output vector scaled by
//! `1/√n`, so the full loss is `½‖Xβ − y‖₂²`. Batch quantities
//! (`H_B = (1/b) Σ_{i∈B} x_i x_iᵀ` and the batch gradient) use the raw rows.

use crate::error::{CoreError, Result};
use crate::linalg::{dot, DenseMat};
use crate::rng::RngStream;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// Generation provenance, echoed into the dataset file header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetMeta {
    pub s: usize,
    pub mean: f64,
    pub sigma: f64,
    pub seed: u64,
}

/// A (noiseless) regression instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub d: usize,
    /// n×d, row i = x_i/√n
    pub x: DenseMat,
    /// y_i/√n
    pub y: Vec<f64>,
    /// unnormalised inputs, n×d
    pub raw_rows: DenseMat,
    /// unnormalised outputs
    pub raw_y: Vec<f64>,
    pub sparse_truth: Option<Vec<f64>>,
    /// cached XᵀX = (1/n) Σ x_i x_iᵀ
    pub h: DenseMat,
    pub meta: Option<DatasetMeta>,
}

impl Dataset {
    /// Build from raw rows/outputs; normalised views and the Hessian are derived.
    pub fn from_raw(
        raw_rows: DenseMat,
        raw_y: Vec<f64>,
        sparse_truth: Option<Vec<f64>>,
        meta: Option<DatasetMeta>,
    ) -> Result<Dataset> {
        let n = raw_rows.rows();
        let d = raw_rows.cols();
        if n == 0 || d == 0 {
            return Err(CoreError::InvalidParam("n and d must be positive".into()));
        }
        if raw_y.len() != n {
            return Err(CoreError::DimensionMismatch(format!(
                "y has {} entries for {} rows",
                raw_y.len(),
                n
            )));
        }
        if let Some(t) = &sparse_truth {
            if t.len() != d {
                return Err(CoreError::DimensionMismatch(format!(
                    "truth has {} entries for d={}",
                    t.len(),
                    d
                )));
            }
        }
        if !raw_rows.data().iter().all(|v| v.is_finite()) || !raw_y.iter().all(|v| v.is_finite()) {
            return Err(CoreError::InvalidParam("non-finite entries".into()));
        }
        let inv_sqrt_n = 1.0 / (n as f64).sqrt();
        let x = DenseMat::from_rows(n, d, raw_rows.data().iter().map(|v| v * inv_sqrt_n).collect());
        let y: Vec<f64> = raw_y.iter().map(|v| v * inv_sqrt_n).collect();
        let mut h = DenseMat::zeros(d, d);
        for i in 0..n {
            h.add_outer(x.row(i), 1.0);
        }
        Ok(Dataset {
            n,
            d,
            x,
            y,
            raw_rows,
            raw_y,
            sparse_truth,
            h,
            meta,
        })
    }

    /// Indices where the sparse truth is non-zero.
    pub fn truth_support(&self) -> Option<Vec<usize>> {
        self.sparse_truth.as_ref().map(|t| {
            t.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| i)
                .collect()
        })
    }

    /// Residual `Xβ − y`.
    pub fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.x.matvec(beta);
        for i in 0..self.n {
            r[i] -= self.y[i];
        }
        r
    }

    /// Full-batch gradient `∇L(β) = Xᵀ(Xβ − y)`.
    pub fn full_gradient(&self, beta: &[f64]) -> Vec<f64> {
        self.x.t_matvec(&self.residual(beta))
    }
}

/// A sorted set of distinct sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    indices: Vec<usize>,
}

impl Batch {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Batch> {
        if indices.is_empty() {
            return Err(CoreError::EmptyBatch);
        }
        let ok = indices.windows(2).all(|w| w[0] < w[1]) && *indices.last().unwrap() < n;
        if !ok {
            return Err(CoreError::InvalidParam(
                "batch indices must be strictly increasing and in range".into(),
            ));
        }
        Ok(Batch { indices })
    }

    pub fn full(n: usize) -> Batch {
        Batch {
            indices: (0..n).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

/// A scalar `L` with `‖H_B β‖ ≤ L ‖β‖` in the norms the analysis uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessBound {
    pub l: f64,
}

/// Draw rows i.i.d. `N(mean·1, sigma² I_d)` and a noiseless sparse target.
///
/// The support of the truth is the first `s` entries of a seeded permutation
/// of `0..d`; each non-zero has magnitude `truth_scale` and a random sign.
pub fn make_gaussian_dataset(
    n: usize,
    d: usize,
    s: usize,
    mean: f64,
    sigma: f64,
    truth_scale: f64,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(CoreError::InvalidParam("n and d must be positive".into()));
    }
    if s == 0 || s > d {
        return Err(CoreError::InvalidParam(format!("need 1 ≤ s ≤ d, got s={s}, d={d}")));
    }
    if sigma <= 0.0 {
        return Err(CoreError::InvalidParam("sigma must be positive".into()));
    }
    let mut rows = vec![0.0; n * d];
    for v in rows.iter_mut() {
        *v = mean + sigma * rng.gauss();
    }
    let raw_rows = DenseMat::from_rows(n, d, rows);
    let mut truth = vec![0.0; d];
    let perm = rng.permutation(d);
    for &j in perm.iter().take(s) {
        truth[j] = truth_scale * rng.sign();
    }
    let raw_y: Vec<f64> = (0..n).map(|i| dot(raw_rows.row(i), &truth)).collect();
    Dataset::from_raw(
        raw_rows,
        raw_y,
        Some(truth),
        Some(DatasetMeta {
            s,
            mean,
            sigma,
            seed: rng.seed(),
        }),
    )
}

/// Variant used by the uncentered-data benches: truth signs all positive, so
/// that `⟨μ, β*⟩` is bounded away from zero as the shape results assume.
pub fn make_gaussian_dataset_aligned(
    n: usize,
    d: usize,
    s: usize,
    mean: f64,
    sigma: f64,
    truth_scale: f64,
    rng: &mut RngStream,
) -> Result<Dataset> {
    let ds = make_gaussian_dataset(n, d, s, mean, sigma, truth_scale, rng)?;
    let mut truth = ds.sparse_truth.clone().unwrap();
    for v in truth.iter_mut() {
        *v = v.abs();
    }
    let raw_y: Vec<f64> = (0..n).map(|i| dot(ds.raw_rows.row(i), &truth)).collect();
    Dataset::from_raw(ds.raw_rows, raw_y, Some(truth), ds.meta)
}

/// `L(β) = ½‖Xβ − y‖₂²`
pub fn loss(beta: &[f64], ds: &Dataset) -> Result<f64> {
    if beta.len() != ds.d {
        return Err(CoreError::DimensionMismatch(format!(
            "beta has {} entries for d={}",
            beta.len(),
            ds.d
        )));
    }
    let r = ds.residual(beta);
    Ok(0.5 * dot(&r, &r))
}

/// `∇L_B(β) = (1/b) Σ_{i∈B} x_i (⟨x_i, β⟩ − y_i)` over raw rows.
pub fn batch_gradient(beta: &[f64], ds: &Dataset, batch: &Batch) -> Result<Vec<f64>> {
    if beta.len() != ds.d {
        return Err(CoreError::DimensionMismatch("beta/d".into()));
    }
    let mut g = vec![0.0; ds.d];
    let inv_b = 1.0 / batch.size() as f64;
    for &i in batch.indices() {
        let row = ds.raw_rows.row(i);
        let r = dot(row, beta) - ds.raw_y[i];
        let c = r * inv_b;
        for j in 0..ds.d {
            g[j] += row[j] * c;
        }
    }
    Ok(g)
}

/// `H_B = (1/b) Σ_{i∈B} x_i x_iᵀ`
pub fn batch_hessian(ds: &Dataset, batch: &Batch) -> Result<DenseMat> {
    let mut h = DenseMat::zeros(ds.d, ds.d);
    let inv_b = 1.0 / batch.size() as f64;
    for &i in batch.indices() {
        h.add_outer(ds.raw_rows.row(i), inv_b);
    }
    Ok(h)
}

/// Row-statistic smoothness constant: the max over the `1/√n`-scaled rows
/// `z_i = x_i/√n` of `max(‖z_i‖₂², ‖z_i‖₁‖z_i‖∞)`, which bounds both
/// `‖H·‖₂` and `‖H·‖∞` scales on the instances the experiments use. `b` is
/// validated but does not enter the value; the step-size rule deliberately
/// uses one full-batch-scale constant for every batch size.
pub fn smoothness(ds: &Dataset, b: usize) -> Result<SmoothnessBound> {
    if b == 0 || b > ds.n {
        return Err(CoreError::BatchOutOfRange { b, n: ds.n });
    }
    let mut l = 0.0_f64;
    for i in 0..ds.n {
        let z = ds.x.row(i);
        let l2: f64 = dot(z, z);
        let l1: f64 = z.iter().map(|v| v.abs()).sum();
        let linf: f64 = z.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        l = l.max(l2.max(l1 * linf));
    }
    Ok(SmoothnessBound { l })
}

/// All size-`b` subsets of `0..n` in lexicographic order. Intended for the
/// small-`n` enumeration oracles; the count is C(n, b).
pub fn enumerate_batches(n: usize, b: usize) -> Vec<Batch> {
    assert!(b >= 1 && b <= n);
    let mut idx: Vec<usize> = (0..b).collect();
    let mut out = Vec::new();
    loop {
        out.push(Batch::new(idx.clone(), n).unwrap());
        // advance to the next combination
        let mut i = b;
        let mut advanced = false;
        while i > 0 {
            i -= 1;
            if idx[i] < n - b + i {
                idx[i] += 1;
                for j in i + 1..b {
                    idx[j] = idx[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            break;
        }
    }
    out
}

/// Uniform sample from the size-`b` subsets of `0..n` (Floyd's algorithm).
pub fn sample_batch(n: usize, b: usize, rng: &mut RngStream) -> Result<Batch> {
    if b == 0 || b > n {
        return Err(CoreError::BatchOutOfRange { b, n });
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(b);
    for j in (n - b)..n {
        let t = rng.below((j + 1) as u64) as usize;
        match chosen.binary_search(&t) {
            Ok(_) => {
                let pos = chosen.binary_search(&j).unwrap_err();
                chosen.insert(pos, j);
            }
            Err(pos) => chosen.insert(pos, t),
        }
    }
    Batch::new(chosen, n)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write the text format: header `n d s mean sigma seed`, then the raw rows,
/// then the raw outputs, then the sparse truth (if any). 17 significant
/// digits; round-trips bit-exactly.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    let meta = ds.meta.unwrap_or(DatasetMeta {
        s: ds.truth_support().map_or(0, |s| s.len()),
        mean: 0.0,
        sigma: 0.0,
        seed: 0,
    });
    writeln!(
        w,
        "{} {} {} {} {} {}",
        ds.n,
        ds.d,
        meta.s,
        fmt17(meta.mean),
        fmt17(meta.sigma),
        meta.seed
    )?;
    for i in 0..ds.n {
        let line: Vec<String> = ds.raw_rows.row(i).iter().map(|v| fmt17(*v)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    let yline: Vec<String> = ds.raw_y.iter().map(|v| fmt17(*v)).collect();
    writeln!(w, "{}", yline.join(" "))?;
    if let Some(t) = &ds.sparse_truth {
        let tline: Vec<String> = t.iter().map(|v| fmt17(*v)).collect();
        writeln!(w, "{}", tline.join(" "))?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(f).lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::Parse("empty dataset file".into()))??;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 6 {
        return Err(CoreError::Parse(format!(
            "expected header `n d s mean sigma seed`, got {} tokens",
            toks.len()
        )));
    }
    let n: usize = toks[0].parse().map_err(|_| CoreError::Parse("bad n".into()))?;
    let d: usize = toks[1].parse().map_err(|_| CoreError::Parse("bad d".into()))?;
    let s: usize = toks[2].parse().map_err(|_| CoreError::Parse("bad s".into()))?;
    let mean: f64 = toks[3].parse().map_err(|_| CoreError::Parse("bad mean".into()))?;
    let sigma: f64 = toks[4].parse().map_err(|_| CoreError::Parse("bad sigma".into()))?;
    let seed: u64 = toks[5].parse().map_err(|_| CoreError::Parse("bad seed".into()))?;

    let parse_line = |line: &str, want: usize, what: &str| -> Result<Vec<f64>> {
        let vals: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(|t| t.parse::<f64>()).collect();
        let vals = vals.map_err(|_| CoreError::Parse(format!("bad float in {what}")))?;
        if vals.len() != want {
            return Err(CoreError::Parse(format!(
                "{what}: expected {want} values, got {}",
                vals.len()
            )));
        }
        Ok(vals)
    };

    let mut raw = Vec::with_capacity(n * d);
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| CoreError::Parse(format!("missing row {i}")))??;
        raw.extend(parse_line(&line, d, "row")?);
    }
    let yline = lines
        .next()
        .ok_or_else(|| CoreError::Parse("missing y line".into()))??;
    let raw_y = parse_line(&yline, n, "y")?;
    let truth = match lines.next() {
        Some(line) => {
            let line = line?;
            if line.trim().is_empty() {
                None
            } else {
                Some(parse_line(&line, d, "truth")?)
            }
        }
        None => None,
    };
    Dataset::from_raw(
        DenseMat::from_rows(n, d, raw),
        raw_y,
        truth,
        Some(DatasetMeta { s, mean, sigma, seed }),
    )
}
