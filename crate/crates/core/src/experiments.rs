//! Matrix ensembles, seeded multi-trial runs and CSV output.
//!
//! Stream layout for a given `base_seed`: the matrix is drawn from stream 0 of
//! `base_seed`; trial `t` draws its right-hand side from stream 1 of `base_seed + t`
//! and its row/column indices from stream 2 of `base_seed + t`. Every method sees
//! the same matrix and the same per-trial right-hand sides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{check_eps, Error, Result};
use crate::linalg::{svd, DenseMatrix, LeastSquaresReference, LinearSystem, SvdResult, Vector};
use crate::rates::{lambda_min_plus_oracle, lambda_min_plus_w_eps, ExpectationMode};
use crate::sampling::SeededStream;
use crate::solvers::{run_solver_with, MethodConfig, RunOptions, TrialRecord};

const MATRIX_STREAM: u64 = 0;
const RHS_STREAM: u64 = 1;
const INDEX_STREAM: u64 = 2;

/// Order statistic used for the band: 5th smallest / 5th largest.
pub const BAND_RANK: usize = 5;

/// Order-of-magnitude grid `10⁻⁵ … 10⁴`.
pub const DEFAULT_EPS_GRID: [f64; 10] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4];

pub const DEFAULT_CHECKPOINTS: [usize; 4] = [2500, 5000, 7500, 10000];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// i.i.d. `U[0, 1)` entries.
    Coherent,
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixKind::Gaussian => "gaussian",
            MatrixKind::Coherent => "coherent",
        })
    }
}

impl FromStr for MatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(MatrixKind::Gaussian),
            "coherent" => Ok(MatrixKind::Coherent),
            other => Err(Error::InvalidConfig(format!(
                "unknown matrix kind '{other}'"
            ))),
        }
    }
}

pub fn gen_gaussian(m: usize, n: usize, stream: &mut SeededStream) -> DenseMatrix {
    DenseMatrix::from_fn(m, n, |_, _| stream.standard_normal())
}

pub fn gen_coherent(m: usize, n: usize, stream: &mut SeededStream) -> DenseMatrix {
    DenseMatrix::from_fn(m, n, |_, _| stream.uniform())
}

pub fn gen_matrix(kind: MatrixKind, m: usize, n: usize, stream: &mut SeededStream) -> DenseMatrix {
    match kind {
        MatrixKind::Gaussian => gen_gaussian(m, n, stream),
        MatrixKind::Coherent => gen_coherent(m, n, stream),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub matrix_kind: MatrixKind,
    pub m: usize,
    pub n: usize,
    pub trials: usize,
    pub iterations: usize,
    pub eps_list: Vec<f64>,
    pub base_seed: u64,
    pub record_every: usize,
    /// Iteration counts reported by the error-vs-ε sweep.
    pub checkpoints: Vec<usize>,
    pub output_path: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            matrix_kind: MatrixKind::Gaussian,
            m: 200,
            n: 10,
            trials: 50,
            iterations: 10_000,
            eps_list: DEFAULT_EPS_GRID.to_vec(),
            base_seed: 0,
            record_every: 10,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            output_path: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidConfig(
                "matrix dimensions must be at least 1".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig(
                "record stride must be at least 1".into(),
            ));
        }
        for &eps in &self.eps_list {
            check_eps(eps)?;
        }
        Ok(())
    }

    fn require_eps(&self) -> Result<()> {
        if self.eps_list.is_empty() {
            return Err(Error::InvalidConfig("eps list must not be empty".into()));
        }
        Ok(())
    }
}

/// A seeded matrix with its factorisation, shared by every trial.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub a: DenseMatrix,
    factor: SvdResult,
    base_seed: u64,
}

impl Ensemble {
    pub fn new(kind: MatrixKind, m: usize, n: usize, base_seed: u64) -> Result<Self> {
        let a = gen_matrix(
            kind,
            m,
            n,
            &mut SeededStream::with_stream(base_seed, MATRIX_STREAM),
        );
        Self::from_matrix(a, base_seed)
    }

    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        Self::new(config.matrix_kind, config.m, config.n, config.base_seed)
    }

    pub fn from_matrix(a: DenseMatrix, base_seed: u64) -> Result<Self> {
        let factor = svd(&a)?;
        Ok(Self {
            a,
            factor,
            base_seed,
        })
    }

    pub fn trial_seed(&self, t: usize) -> u64 {
        self.base_seed.wrapping_add(t as u64)
    }

    /// `b ~ U[0, 1)^m` for trial `t`.
    pub fn trial_rhs(&self, t: usize) -> Vector {
        let mut s = SeededStream::with_stream(self.trial_seed(t), RHS_STREAM);
        Vector::from_fn(self.a.nrows(), |_, _| s.uniform())
    }

    pub fn trial_system(&self, t: usize) -> Result<LinearSystem> {
        LinearSystem::new(self.a.clone(), self.trial_rhs(t))
    }

    pub fn run_trial(
        &self,
        method: MethodConfig,
        t: usize,
        iterations: usize,
        record_every: usize,
    ) -> Result<TrialRecord> {
        let system = self.trial_system(t)?;
        let reference = LeastSquaresReference::new(&self.factor, system.b())?;
        let mut stream = SeededStream::with_stream(self.trial_seed(t), INDEX_STREAM);
        run_solver_with(
            &system,
            &self.factor,
            &reference,
            method,
            &RunOptions::new(iterations, record_every),
            &mut stream,
        )
    }

    /// Trials `0..trials` in parallel, returned in trial order.
    pub fn run_trials(
        &self,
        method: MethodConfig,
        trials: usize,
        iterations: usize,
        record_every: usize,
    ) -> Result<Vec<TrialRecord>> {
        (0..trials)
            .into_par_iter()
            .map(|t| self.run_trial(method, t, iterations, record_every))
            .collect()
    }
}

/// Mean and order-statistic band of one column of per-trial values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandStats {
    pub mean: f64,
    pub band_low: f64,
    pub band_high: f64,
}

/// With fewer than `2·BAND_RANK − 1` values the rank shrinks to the median so that
/// `band_low ≤ band_high` still holds.
pub fn band_stats(values: &[f64]) -> Result<BandStats> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("no trial values to aggregate".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let len = sorted.len();
    let r = (BAND_RANK - 1).min((len - 1) / 2);
    Ok(BandStats {
        mean: values.iter().sum::<f64>() / len as f64,
        band_low: sorted[r],
        band_high: sorted[len - 1 - r],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRow {
    pub k: usize,
    pub x: BandStats,
    pub z: BandStats,
    pub combined: BandStats,
}

/// Fold per-trial records (in trial order) into one row per recorded `k`.
pub fn aggregate(records: &[TrialRecord]) -> Result<Vec<IterationRow>> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidConfig("no trials to aggregate".into()))?;
    if records.iter().any(|r| r.ks != first.ks) {
        return Err(Error::InvalidConfig(
            "trials recorded different iterations".into(),
        ));
    }
    let column = |idx: usize, pick: fn(&TrialRecord) -> &Vec<f64>| -> Vec<f64> {
        records.iter().map(|r| pick(r)[idx]).collect()
    };
    first
        .ks
        .iter()
        .enumerate()
        .map(|(idx, &k)| {
            Ok(IterationRow {
                k,
                x: band_stats(&column(idx, |r| &r.err_x))?,
                z: band_stats(&column(idx, |r| &r.err_z))?,
                combined: band_stats(&column(idx, |r| &r.err_combined))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub k: usize,
    pub mean_err_x: f64,
    pub band_low: f64,
    pub band_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRow {
    pub eps: f64,
    pub lambda_min_plus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub kind: MatrixKind,
    pub m: usize,
    pub n: usize,
    pub best_eps: f64,
    pub final_mean_err: f64,
}

/// Methods compared in the error-vs-iteration experiment: REK and SAP-REK at each ε.
pub fn convergence_methods(config: &ExperimentConfig) -> Result<Vec<MethodConfig>> {
    let mut methods = vec![MethodConfig::rek()];
    for &eps in &config.eps_list {
        methods.push(MethodConfig::saprek(eps)?);
    }
    Ok(methods)
}

pub fn error_vs_iteration(
    config: &ExperimentConfig,
) -> Result<Vec<(MethodConfig, Vec<IterationRow>)>> {
    config.validate()?;
    let ensemble = Ensemble::from_config(config)?;
    convergence_methods(config)?
        .into_iter()
        .map(|method| {
            let records = ensemble.run_trials(
                method,
                config.trials,
                config.iterations,
                config.record_every,
            )?;
            Ok((method, aggregate(&records)?))
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn checkpoints(config: &ExperimentConfig) -> Vec<usize> {
    let mut ks: Vec<usize> = if config.checkpoints.is_empty() {
        vec![config.iterations]
    } else {
        config.checkpoints.clone()
    };
    ks.sort_unstable();
    ks.dedup();
    ks
}

pub fn error_vs_epsilon(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    config.require_eps()?;
    let ks = checkpoints(config);
    let horizon = *ks.last().expect("nonempty checkpoints");
    let stride = ks.iter().fold(0, |g, &k| gcd(g, k)).max(1);
    let ensemble = Ensemble::from_config(config)?;
    let mut rows = Vec::with_capacity(ks.len() * config.eps_list.len());
    for &eps in &config.eps_list {
        let records =
            ensemble.run_trials(MethodConfig::saprek(eps)?, config.trials, horizon, stride)?;
        let agg = aggregate(&records)?;
        for &k in &ks {
            let row = agg
                .iter()
                .find(|r| r.k == k)
                .expect("checkpoint is a multiple of the stride");
            rows.push(SweepRow {
                eps,
                k,
                mean_err_x: row.x.mean,
                band_low: row.x.band_low,
                band_high: row.x.band_high,
            });
        }
    }
    Ok(rows)
}

pub fn lambda_curve(config: &ExperimentConfig, exact_z: bool) -> Result<Vec<LambdaRow>> {
    config.validate()?;
    config.require_eps()?;
    let ensemble = Ensemble::from_config(config)?;
    config
        .eps_list
        .iter()
        .map(|&eps| {
            let lambda_min_plus = if exact_z {
                lambda_min_plus_oracle(&ensemble.a, eps, ExpectationMode::ExactZ)?
            } else {
                lambda_min_plus_w_eps(&ensemble.a, eps)?
            };
            Ok(LambdaRow {
                eps,
                lambda_min_plus,
            })
        })
        .collect()
}

/// Smallest final mean `‖x − x*‖²` over the ε grid; ties go to the first ε.
pub fn table_row(config: &ExperimentConfig) -> Result<TableRow> {
    config.validate()?;
    config.require_eps()?;
    let ensemble = Ensemble::from_config(config)?;
    let mut best: Option<(f64, f64)> = None;
    for &eps in &config.eps_list {
        let records = ensemble.run_trials(
            MethodConfig::saprek(eps)?,
            config.trials,
            config.iterations,
            config.iterations.max(1),
        )?;
        let last = *aggregate(&records)?.last().expect("at least the k = 0 row");
        if best.is_none_or(|(_, err)| last.x.mean < err) {
            best = Some((eps, last.x.mean));
        }
    }
    let (best_eps, final_mean_err) = best.expect("nonempty eps list");
    Ok(TableRow {
        kind: config.matrix_kind,
        m: config.m,
        n: config.n,
        best_eps,
        final_mean_err,
    })
}

/// Default table layout: 200×10, 200×20 and 400×10 for both kinds.
pub const TABLE_DIMS: [(usize, usize); 3] = [(200, 10), (200, 20), (400, 10)];

pub fn table_eps_sweep(base: &ExperimentConfig, dims: &[(usize, usize)]) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    for &(m, n) in dims {
        for kind in [MatrixKind::Gaussian, MatrixKind::Coherent] {
            let config = ExperimentConfig {
                matrix_kind: kind,
                m,
                n,
                ..base.clone()
            };
            rows.push(table_row(&config)?);
        }
    }
    Ok(rows)
}

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

pub const ITERATION_HEADER: [&str; 10] = [
    "k",
    "mean_err_x",
    "band_low_x",
    "band_high_x",
    "mean_err_z",
    "band_low_z",
    "band_high_z",
    "mean_err_combined",
    "band_low_c",
    "band_high_c",
];

pub fn write_iteration_csv(path: &Path, rows: &[IterationRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(ITERATION_HEADER)?;
    for r in rows {
        let mut rec = vec![r.k.to_string()];
        for s in [r.x, r.z, r.combined] {
            rec.extend([
                fmt_float(s.mean),
                fmt_float(s.band_low),
                fmt_float(s.band_high),
            ]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["eps", "k", "mean_err_x", "band_low", "band_high"])?;
    for r in rows {
        w.write_record([
            fmt_float(r.eps),
            r.k.to_string(),
            fmt_float(r.mean_err_x),
            fmt_float(r.band_low),
            fmt_float(r.band_high),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_lambda_csv(path: &Path, rows: &[LambdaRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["eps", "lambda_min_plus"])?;
    for r in rows {
        w.write_record([fmt_float(r.eps), fmt_float(r.lambda_min_plus)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_csv(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["kind", "m", "n", "best_eps", "final_mean_err"])?;
    for r in rows {
        w.write_record([
            r.kind.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            fmt_float(r.best_eps),
            fmt_float(r.final_mean_err),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<output_path>/<method>.csv` for REK and every ε; returns the paths in method order.
pub fn run_error_vs_iteration(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let results = error_vs_iteration(config)?;
    fs::create_dir_all(&config.output_path)?;
    results
        .iter()
        .map(|(method, rows)| {
            let path = config.output_path.join(format!("{}.csv", method.method));
            write_iteration_csv(&path, rows)?;
            Ok(path)
        })
        .collect()
}

pub fn run_error_vs_epsilon(config: &ExperimentConfig) -> Result<PathBuf> {
    let rows = error_vs_epsilon(config)?;
    write_sweep_csv(&config.output_path, &rows)?;
    Ok(config.output_path.clone())
}

pub fn run_lambda_curve(config: &ExperimentConfig, exact_z: bool) -> Result<PathBuf> {
    let rows = lambda_curve(config, exact_z)?;
    write_lambda_csv(&config.output_path, &rows)?;
    Ok(config.output_path.clone())
}

pub fn run_table_eps_sweep(config: &ExperimentConfig, dims: &[(usize, usize)]) -> Result<PathBuf> {
    let rows = table_eps_sweep(config, dims)?;
    write_table_csv(&config.output_path, &rows)?;
    Ok(config.output_path.clone())
}
