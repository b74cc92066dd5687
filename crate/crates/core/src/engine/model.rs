use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::config::{OptConfig, OptMethod, Param, TrendMode};
use crate::engine::dataset::{Dataset, Standardization};
use crate::engine::optimize::{maximize, AscentSettings};
use crate::error::{check_dim, Error, RestartFailure, Result};
use crate::kernel::{GramMatrix, KernelSpec};
use crate::linalg::{factorize, Factor};
use crate::noise::{calibrate_mc_samples, default_probe_pairs, draw_noise, AdjustedDesign, NoiseSample, NoiseSpec, DEFAULT_PROBE_PAIRS};
use crate::seed::{derive_seed, rng_from_seed};
use crate::zoo::ModelKind;

const PROBE_STREAM: u64 = 0x50;

/// Predictive mean and variance at one input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// One optimizer run (or one grid point for grid search), in natural model units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub restart: usize,
    pub init: Vec<f64>,
    pub converged: Vec<f64>,
    pub log_likelihood: Option<f64>,
    pub iterations: usize,
    pub status: String,
}

/// Fitted linear mean `β₀ + Σ β_j x_j` (model units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub intercept: bool,
    pub coeffs: Vec<f64>,
}

impl TrendFit {
    fn value(&self, x: &[f64]) -> f64 {
        trend_row(x, self.intercept).iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }
}

fn trend_row(x: &[f64], intercept: bool) -> Vec<f64> {
    let mut row = Vec::with_capacity(x.len() + 1);
    if intercept {
        row.push(1.0);
    }
    row.extend_from_slice(x);
    row
}

fn trend_design(x: &DMatrix<f64>, intercept: bool) -> DMatrix<f64> {
    let off = usize::from(intercept);
    DMatrix::from_fn(x.nrows(), x.ncols() + off, |i, j| if intercept && j == 0 { 1.0 } else { x[(i, j - off)] })
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-12)
        .map_err(|e| Error::Numeric(format!("least squares failed: {e}")))
}

/// State needed at prediction time, derived deterministically from the
/// public fields of [`TrainedModel`].
struct GpState {
    design: Option<AdjustedDesign>,
    factor: Option<Factor>,
    alpha: DVector<f64>,
    /// `(FᵀF)⁺` for the trend-only model.
    linear_cov: Option<DMatrix<f64>>,
}

#[derive(Clone)]
pub struct TrainedModel {
    pub kind: ModelKind,
    /// Fitted kernel; `None` for the trend-only model. Its hyperparameters act
    /// on standardized inputs when standardization is on.
    pub kernel: Option<KernelSpec>,
    /// Noise distribution in the data's own input units, with the final sample size.
    pub noise: Option<NoiseSpec>,
    /// Observation-noise variance in output data units.
    pub sigma_eps_sq: f64,
    pub trend: Option<TrendFit>,
    pub standardization: Option<Standardization>,
    pub opt: OptConfig,
    pub data: Dataset,
    pub free_params: Vec<Param>,
    pub train_log: Vec<RestartRecord>,
    pub log_likelihood: f64,
    state: Arc<GpState>,
}

impl fmt::Debug for TrainedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainedModel")
            .field("kind", &self.kind)
            .field("kernel", &self.kernel)
            .field("noise", &self.noise)
            .field("sigma_eps_sq", &self.sigma_eps_sq)
            .field("trend", &self.trend)
            .field("log_likelihood", &self.log_likelihood)
            .finish_non_exhaustive()
    }
}

/// Result of conditioning the GP on (residual) outputs.
struct Conditioned {
    factor: Factor,
    beta: Option<DVector<f64>>,
    alpha: DVector<f64>,
    log_likelihood: f64,
}

fn gaussian_loglik(whitened: &DVector<f64>, factor: &Factor) -> f64 {
    let n = whitened.len() as f64;
    -0.5 * whitened.norm_squared() - 0.5 * factor.log_det() - 0.5 * n * (2.0 * PI).ln()
}

fn add_diagonal(k: &DMatrix<f64>, v: f64) -> DMatrix<f64> {
    let mut a = k.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += v;
    }
    a
}

/// `−½ yᵀ(K+σ²I)⁻¹y − ½ log|K+σ²I| − (n/2) log 2π`, via a (jittered) Cholesky factor.
pub fn log_pseudo_likelihood(k: &GramMatrix, y: &DVector<f64>, sigma_eps_sq: f64) -> Result<f64> {
    check_dim(k.n(), y.len())?;
    if sigma_eps_sq.is_nan() || sigma_eps_sq < 0.0 {
        return Err(Error::Input(format!("sigma_eps_sq must be nonnegative, got {sigma_eps_sq}")));
    }
    let factor = factorize(&add_diagonal(&k.values, sigma_eps_sq))?;
    let w = factor.whiten(&DMatrix::from_column_slice(y.len(), 1, y.as_slice()));
    Ok(gaussian_loglik(&DVector::from_column_slice(w.as_slice()), &factor))
}

fn condition(
    k: &DMatrix<f64>,
    sigma_eps_sq: f64,
    y: &DVector<f64>,
    gls: Option<&DMatrix<f64>>,
) -> Result<Conditioned> {
    let factor = factorize(&add_diagonal(k, sigma_eps_sq))?;
    let n = y.len();
    let yw = factor.whiten(&DMatrix::from_column_slice(n, 1, y.as_slice()));
    let yw = DVector::from_column_slice(yw.as_slice());
    let (beta, resid, resid_w) = match gls {
        Some(f) => {
            let fw = factor.whiten(f);
            let beta = least_squares(&fw, &yw)?;
            let resid = y - f * &beta;
            let resid_w = &yw - &fw * &beta;
            (Some(beta), resid, resid_w)
        }
        None => (None, y.clone(), yw),
    };
    let log_likelihood = gaussian_loglik(&resid_w, &factor);
    let alpha = factor.solve(&resid);
    Ok(Conditioned { factor, beta, alpha, log_likelihood })
}

/// Generalized least-squares trend coefficients for covariance `K + σ²I`.
pub fn gls_coefficients(k: &DMatrix<f64>, sigma_eps_sq: f64, f: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(condition(k, sigma_eps_sq, y, Some(f))?.beta.expect("gls requested"))
}

/// Everything fixed for one fit: model-unit data, frozen design, trend layout.
struct Problem {
    y: DVector<f64>,
    design: AdjustedDesign,
    trend_f: Option<DMatrix<f64>>,
    trend_mode: TrendMode,
    /// β from the first-stage OLS when the trend is fitted in two stages.
    ols_beta: Option<DVector<f64>>,
}

impl Problem {
    fn build(
        data: &Dataset,
        kernel: &KernelSpec,
        noise: Option<&NoiseSpec>,
        opt: &OptConfig,
        standardization: Option<&Standardization>,
    ) -> Result<Problem> {
        let (x, y) = model_units(data, standardization);
        let sample = match noise {
            // all draws are zero: one draw gives the same kernel without m² rounding
            Some(spec) if spec.is_degenerate() => NoiseSample::zero(data.dim()),
            Some(spec) => {
                let spec = match standardization {
                    Some(s) => spec.standardized(&s.input_scale)?,
                    None => spec.clone(),
                };
                draw_noise(&spec, data.dim())?
            }
            None => NoiseSample::zero(data.dim()),
        };
        let design = AdjustedDesign::new(&x, &sample, kernel.family)?;
        let trend_f = opt.trend.enabled.then(|| trend_design(&x, opt.trend.intercept));
        let ols_beta = match (&trend_f, opt.trend.mode) {
            (Some(f), TrendMode::TwoStage) => Some(least_squares(f, &y)?),
            _ => None,
        };
        Ok(Problem { y, design, trend_f, trend_mode: opt.trend.mode, ols_beta })
    }

    fn target(&self) -> DVector<f64> {
        match (&self.ols_beta, &self.trend_f) {
            (Some(b), Some(f)) => &self.y - f * b,
            _ => self.y.clone(),
        }
    }

    fn condition(&self, kernel: &KernelSpec, sigma_eps_sq: f64) -> Result<Conditioned> {
        let k = self.design.gram(kernel)?;
        let gls = match self.trend_mode {
            TrendMode::Gls => self.trend_f.as_ref(),
            TrendMode::TwoStage => None,
        };
        condition(&k.values, sigma_eps_sq, &self.target(), gls)
    }

    fn trend_fit(&self, cond: &Conditioned, intercept: bool) -> Option<TrendFit> {
        let beta = self.ols_beta.as_ref().or(cond.beta.as_ref())?;
        Some(TrendFit { intercept, coeffs: beta.iter().copied().collect() })
    }
}

fn model_units(data: &Dataset, s: Option<&Standardization>) -> (DMatrix<f64>, DVector<f64>) {
    match s {
        Some(s) => (s.inputs(&data.inputs), data.targets.map(|v| s.output(v))),
        None => (data.inputs.clone(), data.targets.clone()),
    }
}

/// Output variance scale: σ_ε² values are given in data units and divided by this.
fn output_var(s: Option<&Standardization>) -> f64 {
    s.map_or(1.0, |s| s.output_scale * s.output_scale)
}

fn resolve_kernel(kernel: &KernelSpec, data: &Dataset) -> Result<KernelSpec> {
    let mut k = kernel.clone();
    if k.input_dim == 0 {
        k.input_dim = data.dim();
    }
    check_dim(k.input_dim, data.dim())?;
    k.validate()?;
    Ok(k)
}

/// Maximizes the log pseudo-likelihood over the free hyperparameters and
/// conditions the model at the best optimum found.
pub fn fit(data: &Dataset, kernel: Option<&KernelSpec>, noise: Option<&NoiseSpec>, opt: &OptConfig) -> Result<TrainedModel> {
    if data.n() < 2 {
        return Err(Error::Data(format!("need at least 2 observations, got {}", data.n())));
    }
    opt.validate(kernel)?;
    let standardization = Standardization::fit(data, opt.standardize);
    let Some(kernel) = kernel else {
        if noise.is_some() {
            return Err(Error::Config("trend-only model takes no input noise".into()));
        }
        return TrainedModel::linear(data, opt, standardization);
    };
    let mut kernel = resolve_kernel(kernel, data)?;
    let ov = output_var(standardization.as_ref());
    let mut sigma_eps_sq = opt.sigma_eps_sq / ov;
    for (p, v) in &opt.pinned {
        p.set(&mut kernel, &mut sigma_eps_sq, if *p == Param::SigmaEpsSq { v / ov } else { *v });
    }

    let noise = match noise {
        Some(spec) => {
            spec.validate()?;
            Some(if spec.cv_rule { calibrated(spec, &kernel, data, standardization.as_ref())? } else { spec.clone() })
        }
        None => None,
    };

    let problem = Problem::build(data, &kernel, noise.as_ref(), opt, standardization.as_ref())?;
    let free: Vec<Param> = Param::for_kernel(&kernel)
        .into_iter()
        .chain(std::iter::once(Param::SigmaEpsSq))
        .filter(|p| !opt.pinned.contains_key(p))
        .collect();
    let apply = |values: &[f64]| {
        let mut k = kernel.clone();
        let mut s = sigma_eps_sq;
        for (p, v) in free.iter().zip(values) {
            p.set(&mut k, &mut s, *v);
        }
        (k, s)
    };
    let objective = |z: &[f64]| -> Result<f64> {
        let values: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        let (k, s) = apply(&values);
        Ok(problem.condition(&k, s)?.log_likelihood)
    };

    let log = match opt.method {
        OptMethod::MultistartGradient => multistart(&objective, &free, &kernel, sigma_eps_sq, opt),
        OptMethod::Grid => grid_search(&objective, &free, &kernel, sigma_eps_sq, opt, ov),
    };
    let best = log
        .iter()
        .filter(|r| r.log_likelihood.is_some())
        .fold(None::<&RestartRecord>, |best, r| match best {
            Some(b) if b.log_likelihood >= r.log_likelihood => Some(b),
            _ => Some(r),
        });
    let Some(best) = best else {
        return Err(Error::Training(
            log.into_iter()
                .map(|r| RestartFailure { restart: r.restart, init: r.init, reason: r.status })
                .collect(),
        ));
    };
    let (fitted_kernel, fitted_eps) = apply(&best.converged);
    let mut model = TrainedModel::from_problem(
        problem,
        data,
        fitted_kernel,
        noise,
        fitted_eps,
        opt,
        standardization,
    )?;
    model.free_params = free;
    model.train_log = log;
    Ok(model)
}

fn calibrated(spec: &NoiseSpec, kernel: &KernelSpec, data: &Dataset, s: Option<&Standardization>) -> Result<NoiseSpec> {
    let (x, _) = model_units(data, s);
    let unit_spec = match s {
        Some(s) => spec.standardized(&s.input_scale)?,
        None => spec.clone(),
    };
    let probes = default_probe_pairs(&x, DEFAULT_PROBE_PAIRS, derive_seed(spec.seed, &[PROBE_STREAM]));
    let (tuned, cv) = calibrate_mc_samples(&unit_spec, kernel, &probes)?;
    log::info!("MC sample size {} (coefficient of variation {:.4})", tuned.mc_samples, cv);
    Ok(NoiseSpec { mc_samples: tuned.mc_samples, ..spec.clone() })
}

fn log_bounds(free: &[Param], opt: &OptConfig) -> (Vec<f64>, Vec<f64>) {
    free.iter()
        .map(|p| {
            let (lo, hi) = opt.bound(*p);
            (lo.ln(), hi.ln())
        })
        .unzip()
}

fn multistart<F>(objective: &F, free: &[Param], kernel: &KernelSpec, sigma_eps_sq: f64, opt: &OptConfig) -> Vec<RestartRecord>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let (lo, hi) = log_bounds(free, opt);
    let settings = AscentSettings { max_iter: opt.max_iter, ..Default::default() };
    (0..opt.restarts)
        .into_par_iter()
        .map(|r| {
            let z0: Vec<f64> = if r == 0 {
                free.iter()
                    .zip(lo.iter().zip(&hi))
                    .map(|(p, (l, h))| p.get(kernel, sigma_eps_sq).max(f64::MIN_POSITIVE).ln().clamp(*l, *h))
                    .collect()
            } else {
                let mut rng = rng_from_seed(derive_seed(opt.seed, &[r as u64]));
                lo.iter().zip(&hi).map(|(l, h)| if l < h { rng.random_range(*l..*h) } else { *l }).collect()
            };
            let init: Vec<f64> = z0.iter().map(|v| v.exp()).collect();
            match maximize(objective, &z0, &lo, &hi, settings) {
                Ok(out) => RestartRecord {
                    restart: r,
                    init,
                    converged: out.point.iter().map(|v| v.exp()).collect(),
                    log_likelihood: Some(out.value),
                    iterations: out.iterations,
                    status: if out.converged { "converged".into() } else { "max_iter".into() },
                },
                Err(e) => RestartRecord {
                    restart: r,
                    init: init.clone(),
                    converged: init,
                    log_likelihood: None,
                    iterations: 0,
                    status: e.to_string(),
                },
            }
        })
        .collect()
}

fn grid_search<F>(objective: &F, free: &[Param], kernel: &KernelSpec, sigma_eps_sq: f64, opt: &OptConfig, ov: f64) -> Vec<RestartRecord>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let axes: Vec<Vec<f64>> = free
        .iter()
        .map(|p| match opt.grid.get(p) {
            Some(axis) if *p == Param::SigmaEpsSq => axis.iter().map(|v| v / ov).collect(),
            Some(axis) => axis.clone(),
            None => vec![p.get(kernel, sigma_eps_sq)],
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut rest = idx;
            let point: Vec<f64> = axes
                .iter()
                .map(|axis| {
                    let v = axis[rest % axis.len()];
                    rest /= axis.len();
                    v
                })
                .collect();
            let z: Vec<f64> = point.iter().map(|v| v.ln()).collect();
            let (ll, status) = match objective(&z) {
                Ok(v) if v.is_finite() => (Some(v), "evaluated".to_string()),
                Ok(_) => (None, "non-finite likelihood".to_string()),
                Err(e) => (None, e.to_string()),
            };
            RestartRecord { restart: idx, init: point.clone(), converged: point, log_likelihood: ll, iterations: 1, status }
        })
        .collect()
}

impl TrainedModel {
    /// Conditions a model at the given hyperparameters without optimizing.
    /// The noise spec is used as given (no sample-size calibration).
    pub fn from_hyperparameters(
        data: &Dataset,
        kernel: Option<&KernelSpec>,
        noise: Option<&NoiseSpec>,
        sigma_eps_sq: f64,
        opt: &OptConfig,
    ) -> Result<TrainedModel> {
        let standardization = Standardization::fit(data, opt.standardize);
        let Some(kernel) = kernel else {
            let mut m = TrainedModel::linear(data, opt, standardization)?;
            m.sigma_eps_sq = sigma_eps_sq;
            return Ok(m);
        };
        let kernel = resolve_kernel(kernel, data)?;
        if let Some(n) = noise {
            n.validate()?;
        }
        let problem = Problem::build(data, &kernel, noise, opt, standardization.as_ref())?;
        let ov = output_var(standardization.as_ref());
        Self::from_problem(problem, data, kernel, noise.cloned(), sigma_eps_sq / ov, opt, standardization)
    }

    fn from_problem(
        problem: Problem,
        data: &Dataset,
        kernel: KernelSpec,
        noise: Option<NoiseSpec>,
        sigma_eps_sq: f64,
        opt: &OptConfig,
        standardization: Option<Standardization>,
    ) -> Result<TrainedModel> {
        let cond = problem.condition(&kernel, sigma_eps_sq)?;
        let trend = problem.trend_fit(&cond, opt.trend.intercept);
        let kind = ModelKind::infer(Some(&kernel), noise.is_some());
        let ov = output_var(standardization.as_ref());
        let state = GpState {
            alpha: cond.alpha.clone(),
            linear_cov: None,
            factor: Some(cond.factor),
            design: Some(problem.design),
        };
        Ok(TrainedModel {
            kind,
            kernel: Some(kernel),
            noise,
            sigma_eps_sq: sigma_eps_sq * ov,
            trend,
            standardization,
            opt: opt.clone(),
            data: data.clone(),
            free_params: Vec::new(),
            train_log: Vec::new(),
            log_likelihood: cond.log_likelihood,
            state: Arc::new(state),
        })
    }

    /// Trend-only model fitted by ordinary least squares.
    fn linear(data: &Dataset, opt: &OptConfig, standardization: Option<Standardization>) -> Result<TrainedModel> {
        let (x, y) = model_units(data, standardization.as_ref());
        let intercept = opt.trend.intercept;
        let f = trend_design(&x, intercept);
        let beta = least_squares(&f, &y)?;
        let resid = &y - &f * &beta;
        let n = y.len();
        let dof = n.saturating_sub(f.ncols()).max(1);
        let sigma_eps_sq = resid.norm_squared() / dof as f64;
        let ov = output_var(standardization.as_ref());
        let ftf = f.transpose() * &f;
        let linear_cov = ftf
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Numeric(format!("trend covariance: {e}")))?;
        let ll = if sigma_eps_sq > 0.0 {
            -0.5 * n as f64 * ((2.0 * PI * sigma_eps_sq).ln() + resid.norm_squared() / (n as f64 * sigma_eps_sq))
        } else {
            f64::INFINITY
        };
        Ok(TrainedModel {
            kind: ModelKind::Linear,
            kernel: None,
            noise: None,
            sigma_eps_sq: sigma_eps_sq * ov,
            trend: Some(TrendFit { intercept, coeffs: beta.iter().copied().collect() }),
            standardization,
            opt: opt.clone(),
            data: data.clone(),
            free_params: Vec::new(),
            train_log: Vec::new(),
            log_likelihood: ll,
            state: Arc::new(GpState {
                design: None,
                factor: None,
                alpha: DVector::zeros(0),
                linear_cov: Some(linear_cov),
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// Lower Cholesky factor of `K + σ_ε²I (+ jitter)` in model units.
    pub fn chol_factor(&self) -> Option<DMatrix<f64>> {
        self.state.factor.as_ref().map(Factor::lower)
    }

    pub fn jitter(&self) -> f64 {
        self.state.factor.as_ref().map_or(0.0, |f| f.jitter)
    }

    /// `(K + σ_ε²I)⁻¹ (y − trend)` in model units.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.state.alpha
    }

    /// The frozen noise draws (model units); a single zero draw for noise-free models.
    pub fn noise_sample(&self) -> Option<&NoiseSample> {
        self.state.design.as_ref().map(AdjustedDesign::sample)
    }

    fn to_model_units(&self, x: &[f64]) -> Vec<f64> {
        match &self.standardization {
            Some(s) => s.input(x),
            None => x.to_vec(),
        }
    }

    /// `k(x*, X)` in model units, one entry per training row.
    fn k_star(&self, xm: &[f64]) -> Result<Vec<f64>> {
        let design = self.state.design.as_ref().expect("gp model has a design");
        let kernel = self.kernel.as_ref().expect("gp model has a kernel");
        let row = design.cross(kernel, &DMatrix::from_row_slice(1, xm.len(), xm))?;
        Ok(row.iter().copied().collect())
    }

    pub fn predict(&self, xstar: &[f64]) -> Result<Prediction> {
        check_dim(self.dim(), xstar.len())?;
        let xm = self.to_model_units(xstar);
        let trend = self.trend.as_ref().map_or(0.0, |t| t.value(&xm));
        let (mean, variance) = match (&self.kernel, &self.state.factor) {
            (Some(kernel), Some(factor)) => {
                let k_star = self.k_star(&xm)?;
                let mut gp_mean = 0.0;
                for (k, a) in k_star.iter().zip(self.state.alpha.iter()) {
                    gp_mean += k * a;
                }
                let v = factor.whiten(&DMatrix::from_column_slice(k_star.len(), 1, &k_star));
                let design = self.state.design.as_ref().expect("gp model has a design");
                let prior = design.prior_var(kernel, &xm)?;
                (trend + gp_mean, prior - v.norm_squared())
            }
            _ => {
                let cov = self.state.linear_cov.as_ref().expect("linear model keeps its trend covariance");
                let row = DVector::from_vec(trend_row(&xm, self.trend.as_ref().is_none_or(|t| t.intercept)));
                (trend, self.sigma_eps_sq / output_var(self.standardization.as_ref()) * row.dot(&(cov * &row)))
            }
        };
        let variance = if variance < 0.0 {
            if variance < -1e-10 {
                log::warn!("negative predictive variance {variance:e} clamped to zero");
            }
            0.0
        } else {
            variance
        };
        Ok(match &self.standardization {
            Some(s) => Prediction { mean: s.mean_back(mean), variance: s.var_back(variance) },
            None => Prediction { mean, variance },
        })
    }

    /// Row-by-row prediction; identical to calling [`predict`](Self::predict) per row.
    pub fn predict_batch(&self, xs: &DMatrix<f64>) -> Result<Vec<Prediction>> {
        check_dim(self.dim(), xs.ncols())?;
        (0..xs.nrows())
            .into_par_iter()
            .map(|i| self.predict(&xs.row(i).iter().copied().collect::<Vec<_>>()))
            .collect()
    }

    /// Linear-predictor weights `(K + σ_ε²I)⁻¹ k*` on the model-unit training outputs.
    pub fn blup_weights(&self, xstar: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.dim(), xstar.len())?;
        let factor = self
            .state
            .factor
            .as_ref()
            .ok_or_else(|| Error::Input("trend-only model has no kriging weights".into()))?;
        let xm = self.to_model_units(xstar);
        let k_star = DVector::from_vec(self.k_star(&xm)?);
        Ok(factor.solve(&k_star))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;

    #[test]
    fn likelihood_of_identity_system() {
        let k = GramMatrix::new(DMatrix::zeros(3, 3));
        let c = -1.5 * (2.0 * PI).ln();
        assert!((log_pseudo_likelihood(&k, &DVector::zeros(3), 1.0).unwrap() - c).abs() < 1e-14);
        assert!((c + 2.756815599614018).abs() < 1e-12);
        let y = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!((log_pseudo_likelihood(&k, &y, 1.0).unwrap() - (c - 0.5)).abs() < 1e-14);
        assert!(log_pseudo_likelihood(&k, &DVector::zeros(2), 1.0).is_err());
    }

    #[test]
    fn interpolates_single_point() {
        let data = Dataset::from_1d(&[0.7], &[2.5]).unwrap();
        let k = KernelSpec::rbf(1.0, 1.0, 1);
        let m = TrainedModel::from_hyperparameters(&data, Some(&k), None, 0.0, &OptConfig::default()).unwrap();
        let p = m.predict(&[0.7]).unwrap();
        assert!((p.mean - 2.5).abs() < 1e-12);
        assert!(p.variance.abs() < 1e-12);
        let w = m.blup_weights(&[0.7]).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn far_point_recovers_prior() {
        let data = Dataset::from_1d(&[0.0, 0.5, 1.0], &[1.0, 2.0, 1.5]).unwrap();
        let k = KernelSpec::rbf(0.3, 2.0, 1);
        let opt = OptConfig { trend: crate::engine::config::TrendConfig::linear(), ..Default::default() };
        let m = TrainedModel::from_hyperparameters(&data, Some(&k), None, 0.01, &opt).unwrap();
        let p = m.predict(&[100.0]).unwrap();
        let t = m.trend.as_ref().unwrap();
        let trend = t.coeffs[0] + t.coeffs[1] * 100.0;
        assert!((p.mean - trend).abs() < 1e-9);
        assert!((p.variance - 2.0).abs() < 1e-9);
    }

    #[test]
    fn fit_requires_two_points() {
        let data = Dataset::from_1d(&[0.0], &[1.0]).unwrap();
        let k = KernelSpec::rbf(1.0, 1.0, 1);
        assert!(matches!(fit(&data, Some(&k), None, &OptConfig::default()), Err(Error::Data(_))));
    }

    #[test]
    fn grid_with_one_point_returns_it() {
        let data = Dataset::from_1d(&[0.0, 1.0, 2.0, 3.0], &[0.0, 0.8, 0.9, 0.1]).unwrap();
        let k = KernelSpec::composite(KernelFamily::ArcSine, 2, 1.0, 1.0, 1);
        let mut opt = OptConfig { method: OptMethod::Grid, ..Default::default() };
        opt.grid.insert(Param::SigmaBSq, vec![0.3]);
        opt.grid.insert(Param::SigmaWSq, vec![2.5]);
        opt.grid.insert(Param::SigmaEpsSq, vec![0.05]);
        let m = fit(&data, Some(&k), None, &opt).unwrap();
        let fitted = m.kernel.as_ref().unwrap();
        assert_eq!((fitted.sigma_b_sq, fitted.sigma_w_sq, m.sigma_eps_sq), (0.3, 2.5, 0.05));
        assert_eq!(m.train_log.len(), 1);
    }

    #[test]
    fn all_restarts_failing_is_training_error() {
        // σ_b² = 0 with a zero input makes the arc-cosine map undefined everywhere.
        let data = Dataset::from_1d(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        let k = KernelSpec::composite(KernelFamily::ArcCosine, 1, 0.0, 1.0, 1);
        let opt = OptConfig { restarts: 2, ..Default::default() }.pin(Param::SigmaBSq, 0.0);
        match fit(&data, Some(&k), None, &opt) {
            Err(Error::Training(f)) => assert_eq!(f.len(), 2),
            other => panic!("expected training error, got {other:?}"),
        }
    }

    #[test]
    fn linear_model_fits_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let data = Dataset::from_1d(&x, &y).unwrap();
        let m = fit(&data, None, None, &OptConfig::default()).unwrap();
        assert_eq!(m.kind, ModelKind::Linear);
        assert!((m.predict(&[10.0]).unwrap().mean - 19.0).abs() < 1e-10);
    }
}
