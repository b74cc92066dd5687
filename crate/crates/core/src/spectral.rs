//! Empirical eigenspectra of Gram matrices under standard-Gaussian inputs.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::seed::{derive_seed, rng_from_seed};

/// Eigenvalues below `-NEGATIVE_TOLERANCE · λ_max` are treated as a failure.
pub const NEGATIVE_TOLERANCE: f64 = 1e-8;

/// Least-squares line `y ≈ intercept + slope·t` over an inclusive 1-based index window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub window: [usize; 2],
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub kernel_label: String,
    /// Per replication, descending, negatives clamped to 0.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Mean over replications of `ln max(λ_i, ε·λ_max)`.
    pub mean_log: Vec<f64>,
    pub stderr_log: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean log-eigenvalue against index.
    pub decay_fit: DecayFit,
    /// Mean log-eigenvalue against log index.
    pub loglog_fit: DecayFit,
}

fn one() -> usize {
    1
}
fn default_inputs() -> usize {
    100
}
fn default_reps() -> usize {
    10
}
fn default_window() -> [usize; 2] {
    [5, 80]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledKernel {
    pub label: String,
    pub kernel: KernelSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default = "default_inputs")]
    pub n_inputs: usize,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub input_dim: usize,
    #[serde(default = "default_window")]
    pub window: [usize; 2],
    pub kernels: Vec<LabeledKernel>,
}

impl SpectrumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_inputs < 2 {
            return Err(Error::Config("n_inputs must be at least 2".into()));
        }
        if self.replications == 0 || self.input_dim == 0 {
            return Err(Error::Config("replications and input_dim must be positive".into()));
        }
        let [a, b] = self.window;
        if a < 1 || b > self.n_inputs || b < a + 1 {
            return Err(Error::Config(format!("window [{a}, {b}] must lie in 1..={} and span two indices", self.n_inputs)));
        }
        if self.kernels.is_empty() {
            return Err(Error::Config("at least one kernel is required".into()));
        }
        for k in &self.kernels {
            let mut spec = k.kernel.clone();
            if spec.input_dim == 0 {
                spec.input_dim = self.input_dim;
            }
            if spec.input_dim != self.input_dim {
                return Err(Error::Config(format!("kernel `{}` has input_dim {}, expected {}", k.label, spec.input_dim, self.input_dim)));
            }
            spec.validate()?;
        }
        Ok(())
    }
}

/// Standard-normal inputs for replication `rep`; identical across kernels.
pub fn gaussian_inputs(n: usize, dim: usize, seed: u64, rep: usize) -> DMatrix<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, &[rep as u64]));
    DMatrix::from_fn(n, dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Descending eigenvalues of a symmetric matrix, negatives within tolerance clamped to 0.
pub fn sorted_eigenvalues(gram: &DMatrix<f64>) -> Result<Vec<f64>> {
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("Gram matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(gram.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("eigendecomposition did not converge".into()))?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    if let Some(low) = vals.last() {
        if *low < -NEGATIVE_TOLERANCE * top.max(f64::MIN_POSITIVE) {
            return Err(Error::Numeric(format!("eigenvalue {low:e} is too negative for a covariance matrix")));
        }
    }
    Ok(vals.into_iter().map(|v| v.max(0.0)).collect())
}

/// Ordinary least-squares line through `(t, y)`.
pub fn line_fit(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    let syy: f64 = y.iter().map(|b| (b - ym) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

fn decay_fit(curve: &[f64], window: [usize; 2], log_index: bool) -> DecayFit {
    let idx: Vec<f64> = (window[0]..=window[1])
        .map(|i| if log_index { (i as f64).ln() } else { i as f64 })
        .collect();
    let (slope, intercept, r_squared) = line_fit(&idx, &curve[window[0] - 1..window[1]]);
    DecayFit { window, slope, intercept, r_squared }
}

fn mean_stderr(rows: &[Vec<f64>], i: usize) -> (f64, f64) {
    let r = rows.len() as f64;
    let mean = rows.iter().map(|v| v[i]).sum::<f64>() / r;
    if rows.len() < 2 {
        return (mean, 0.0);
    }
    let var = rows.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Spectrum of an arbitrary covariance constructor over Gaussian inputs.
pub fn eigenspectrum_with<F>(label: &str, gram: F, n_inputs: usize, dim: usize, replications: usize, seed: u64, window: [usize; 2]) -> Result<SpectrumReport>
where
    F: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>> + Sync,
{
    if n_inputs < 2 {
        return Err(Error::Input("n_inputs must be at least 2".into()));
    }
    if replications == 0 || window[0] < 1 || window[1] > n_inputs || window[1] <= window[0] {
        return Err(Error::Input("need at least one replication and a window inside 1..=n_inputs".into()));
    }
    let eigenvalues: Vec<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|rep| sorted_eigenvalues(&gram(&gaussian_inputs(n_inputs, dim, seed, rep))?))
        .collect::<Result<_>>()?;
    let logs: Vec<Vec<f64>> = eigenvalues
        .iter()
        .map(|vals| {
            let floor = f64::EPSILON * vals[0].max(f64::MIN_POSITIVE);
            vals.iter().map(|v| v.max(floor).ln()).collect()
        })
        .collect();
    let (mean, stderr): (Vec<f64>, Vec<f64>) = (0..n_inputs).map(|i| mean_stderr(&eigenvalues, i)).unzip();
    let (mean_log, stderr_log): (Vec<f64>, Vec<f64>) = (0..n_inputs).map(|i| mean_stderr(&logs, i)).unzip();
    Ok(SpectrumReport {
        kernel_label: label.to_string(),
        decay_fit: decay_fit(&mean_log, window, false),
        loglog_fit: decay_fit(&mean_log, window, true),
        eigenvalues,
        mean_log,
        stderr_log,
        mean,
        stderr,
    })
}

pub fn eigenspectrum(kernel: &KernelSpec, n_inputs: usize, replications: usize, seed: u64, window: [usize; 2]) -> Result<SpectrumReport> {
    let label = kernel.family.name();
    eigenspectrum_with(label, |x| Ok(kernel.gram(x)?.values), n_inputs, kernel.input_dim, replications, seed, window)
}

/// One report per configured kernel, all on the same input draws.
pub fn run_spectra(config: &SpectrumConfig) -> Result<Vec<SpectrumReport>> {
    config.validate()?;
    config
        .kernels
        .iter()
        .map(|k| {
            let mut spec = k.kernel.clone();
            spec.input_dim = config.input_dim;
            let mut r = eigenspectrum(&spec, config.n_inputs, config.replications, config.seed, config.window)?;
            r.kernel_label = k.label.clone();
            Ok(r)
        })
        .collect()
}

/// Plot-ready columns: `index  mean_log_eigenvalue  stderr`.
pub fn spectrum_table(report: &SpectrumReport) -> String {
    let mut out = String::from("index\tmean_log_eigenvalue\tstderr\n");
    for (i, (m, s)) in report.mean_log.iter().zip(&report.stderr_log).enumerate() {
        let _ = writeln!(out, "{}\t{:.17e}\t{:.17e}", i + 1, m, s);
    }
    out
}
