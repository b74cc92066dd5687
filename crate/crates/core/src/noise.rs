//! Input-noise distributions and the Monte-Carlo adjusted kernel.
//!
//! With latent input noise `u ~ p_u` the observation covariance is
//! `k(x, x') = E_{u,v}[c(x + u, x' + v)]`. One frozen sample `{u_a}` of size
//! `m` is shared by every entry of a Gram matrix:
//!
//! * train/train, `x ≠ x'`: `(1/m²) Σ_a Σ_b c(x + u_a, x' + u_b)`
//! * diagonal: `(1/m) Σ_a c(x + u_a, x + u_a)`
//! * test/train: `(1/m) Σ_a c(x + u_a, x*)` with `x*` noise-free.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{GramMatrix, KernelFamily, KernelSpec};
use crate::points::PointSet;
use crate::seed::{derive_seed, rng_from_seed};

/// Coefficient-of-variation target for the MC kernel estimate.
pub const CV_TARGET: f64 = 0.025;
pub const DEFAULT_MC_SAMPLES: usize = 30;
/// Sample-size ceiling for CV-driven escalation.
pub const MAX_MC_SAMPLES: usize = 480;
/// Independent replicates used to estimate the CV.
pub const CV_REPLICATES: usize = 10;
pub const DEFAULT_PROBE_PAIRS: usize = 5;

const CV_STREAM: u64 = 0xC0;

/// User-supplied noise sampler; must be deterministic given the RNG.
pub trait NoiseSampler: Send + Sync {
    fn sample(&self, rng: &mut dyn RngCore, dim: usize) -> std::result::Result<Vec<f64>, String>;

    fn label(&self) -> &str {
        "custom"
    }
}

#[derive(Clone)]
pub enum NoiseDistribution {
    GaussianIsotropic { sigma_u_sq: f64 },
    GaussianDiagonal { variances: Vec<f64> },
    Custom(Arc<dyn NoiseSampler>),
}

impl fmt::Debug for NoiseDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseDistribution::GaussianIsotropic { sigma_u_sq } => {
                f.debug_struct("GaussianIsotropic").field("sigma_u_sq", sigma_u_sq).finish()
            }
            NoiseDistribution::GaussianDiagonal { variances } => {
                f.debug_struct("GaussianDiagonal").field("variances", variances).finish()
            }
            NoiseDistribution::Custom(s) => write!(f, "Custom({})", s.label()),
        }
    }
}

impl PartialEq for NoiseDistribution {
    fn eq(&self, other: &Self) -> bool {
        use NoiseDistribution::*;
        match (self, other) {
            (GaussianIsotropic { sigma_u_sq: a }, GaussianIsotropic { sigma_u_sq: b }) => a == b,
            (GaussianDiagonal { variances: a }, GaussianDiagonal { variances: b }) => a == b,
            (Custom(a), Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpecRepr", into = "NoiseSpecRepr")]
pub struct NoiseSpec {
    pub distribution: NoiseDistribution,
    pub mc_samples: usize,
    pub seed: u64,
    /// Double `mc_samples` (up to [`MAX_MC_SAMPLES`]) until the CV rule holds.
    pub cv_rule: bool,
    /// Set once the distribution has been rescaled into standardized input units.
    pub standardization_adjusted: bool,
}

impl NoiseSpec {
    pub fn isotropic(sigma_u_sq: f64, mc_samples: usize, seed: u64) -> Self {
        NoiseSpec {
            distribution: NoiseDistribution::GaussianIsotropic { sigma_u_sq },
            mc_samples,
            seed,
            cv_rule: false,
            standardization_adjusted: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mc_samples < 2 {
            return Err(Error::Config(format!("mc_samples must be at least 2, got {}", self.mc_samples)));
        }
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match &self.distribution {
            NoiseDistribution::GaussianIsotropic { sigma_u_sq } if !ok(*sigma_u_sq) => {
                Err(Error::Config(format!("sigma_u_sq must be nonnegative, got {sigma_u_sq}")))
            }
            NoiseDistribution::GaussianDiagonal { variances } if variances.is_empty() || !variances.iter().all(|v| ok(*v)) => {
                Err(Error::Config("noise variances must be a nonempty list of nonnegative values".into()))
            }
            _ => Ok(()),
        }
    }

    /// True when every draw is identically zero.
    pub fn is_degenerate(&self) -> bool {
        match &self.distribution {
            NoiseDistribution::GaussianIsotropic { sigma_u_sq } => *sigma_u_sq == 0.0,
            NoiseDistribution::GaussianDiagonal { variances } => variances.iter().all(|v| *v == 0.0),
            NoiseDistribution::Custom(_) => false,
        }
    }

    /// Noise expressed in units of inputs divided column-wise by `scales`.
    pub fn standardized(&self, scales: &[f64]) -> Result<NoiseSpec> {
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Input("standardization scales must be positive".into()));
        }
        let distribution = match &self.distribution {
            NoiseDistribution::GaussianIsotropic { sigma_u_sq } => NoiseDistribution::GaussianDiagonal {
                variances: scales.iter().map(|s| sigma_u_sq / (s * s)).collect(),
            },
            NoiseDistribution::GaussianDiagonal { variances } => {
                check_dim(variances.len(), scales.len())?;
                NoiseDistribution::GaussianDiagonal {
                    variances: variances.iter().zip(scales).map(|(v, s)| v / (s * s)).collect(),
                }
            }
            NoiseDistribution::Custom(inner) => NoiseDistribution::Custom(Arc::new(ScaledSampler {
                inner: inner.clone(),
                scales: scales.to_vec(),
            })),
        };
        Ok(NoiseSpec {
            distribution,
            standardization_adjusted: true,
            ..self.clone()
        })
    }
}

struct ScaledSampler {
    inner: Arc<dyn NoiseSampler>,
    scales: Vec<f64>,
}

impl NoiseSampler for ScaledSampler {
    fn sample(&self, rng: &mut dyn RngCore, dim: usize) -> std::result::Result<Vec<f64>, String> {
        let mut u = self.inner.sample(rng, dim)?;
        for (v, s) in u.iter_mut().zip(&self.scales) {
            *v /= s;
        }
        Ok(u)
    }

    fn label(&self) -> &str {
        self.inner.label()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSpecRepr {
    distribution: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma_u_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variances: Option<Vec<f64>>,
    #[serde(default = "default_mc")]
    mc_samples: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    cv_rule: bool,
    #[serde(default)]
    standardization_adjusted: bool,
}

fn default_mc() -> usize {
    DEFAULT_MC_SAMPLES
}

impl TryFrom<NoiseSpecRepr> for NoiseSpec {
    type Error = String;

    fn try_from(r: NoiseSpecRepr) -> std::result::Result<Self, String> {
        let distribution = match (r.distribution.as_str(), r.sigma_u_sq, r.variances) {
            ("gaussian_isotropic", Some(sigma_u_sq), None) => NoiseDistribution::GaussianIsotropic { sigma_u_sq },
            ("gaussian_diagonal", None, Some(variances)) => NoiseDistribution::GaussianDiagonal { variances },
            ("gaussian_isotropic", _, _) => return Err("gaussian_isotropic needs sigma_u_sq (and no variances)".into()),
            ("gaussian_diagonal", _, _) => return Err("gaussian_diagonal needs variances (and no sigma_u_sq)".into()),
            (other, _, _) => return Err(format!("unknown noise distribution `{other}`")),
        };
        let spec = NoiseSpec {
            distribution,
            mc_samples: r.mc_samples,
            seed: r.seed,
            cv_rule: r.cv_rule,
            standardization_adjusted: r.standardization_adjusted,
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl From<NoiseSpec> for NoiseSpecRepr {
    fn from(s: NoiseSpec) -> Self {
        let (distribution, sigma_u_sq, variances) = match s.distribution {
            NoiseDistribution::GaussianIsotropic { sigma_u_sq } => ("gaussian_isotropic", Some(sigma_u_sq), None),
            NoiseDistribution::GaussianDiagonal { variances } => ("gaussian_diagonal", None, Some(variances)),
            // Custom samplers are code, not data; the name marks the file as unloadable.
            NoiseDistribution::Custom(_) => ("custom", None, None),
        };
        NoiseSpecRepr {
            distribution: distribution.to_string(),
            sigma_u_sq,
            variances,
            mc_samples: s.mc_samples,
            seed: s.seed,
            cv_rule: s.cv_rule,
            standardization_adjusted: s.standardization_adjusted,
        }
    }
}

/// A frozen set of noise draws, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSample {
    pub draws: DMatrix<f64>,
    pub cv_estimate: Option<f64>,
}

impl NoiseSample {
    pub fn m(&self) -> usize {
        self.draws.nrows()
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    /// A single zero draw; turns every adjusted formula into the plain kernel.
    pub fn zero(dim: usize) -> Self {
        NoiseSample { draws: DMatrix::zeros(1, dim), cv_estimate: Some(0.0) }
    }

    fn shifted(&self, x: &[f64], a: usize) -> Vec<f64> {
        x.iter().enumerate().map(|(k, v)| v + self.draws[(a, k)]).collect()
    }
}

fn draw_with_seed(spec: &NoiseSpec, dim: usize, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = rng_from_seed(seed);
    let mut draws = DMatrix::zeros(m, dim);
    match &spec.distribution {
        NoiseDistribution::GaussianIsotropic { sigma_u_sq } => {
            let sd = sigma_u_sq.sqrt();
            for a in 0..m {
                for k in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    draws[(a, k)] = sd * z;
                }
            }
        }
        NoiseDistribution::GaussianDiagonal { variances } => {
            check_dim(variances.len(), dim)?;
            for a in 0..m {
                for (k, v) in variances.iter().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    draws[(a, k)] = v.sqrt() * z;
                }
            }
        }
        NoiseDistribution::Custom(sampler) => {
            for a in 0..m {
                let u = sampler
                    .sample(&mut rng, dim)
                    .map_err(|e| Error::Numeric(format!("custom noise sampler failed: {e}")))?;
                check_dim(dim, u.len())?;
                for (k, v) in u.into_iter().enumerate() {
                    draws[(a, k)] = v;
                }
            }
        }
    }
    Ok(draws)
}

/// Draws `spec.mc_samples` i.i.d. noise vectors of width `dim` from `spec.seed`.
pub fn draw_noise(spec: &NoiseSpec, dim: usize) -> Result<NoiseSample> {
    spec.validate()?;
    let draws = draw_with_seed(spec, dim, spec.mc_samples, spec.seed)?;
    Ok(NoiseSample { draws, cv_estimate: None })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdjustCase {
    TrainTrain,
    Diagonal,
    TestTrain,
}

/// Scalar MC estimate of the adjusted kernel. For `TestTrain`, `x` is the
/// training input and `x2` the noise-free test input.
pub fn adjusted_cov(x: &[f64], x2: &[f64], case: AdjustCase, kernel: &KernelSpec, noise: &NoiseSample) -> Result<f64> {
    check_dim(kernel.input_dim, x.len())?;
    check_dim(kernel.input_dim, x2.len())?;
    check_dim(kernel.input_dim, noise.dim())?;
    let m = noise.m();
    match case {
        AdjustCase::TrainTrain => {
            let mut sum = 0.0;
            for a in 0..m {
                let xa = noise.shifted(x, a);
                for b in 0..m {
                    sum += kernel.eval(&xa, &noise.shifted(x2, b))?;
                }
            }
            Ok(sum / (m * m) as f64)
        }
        AdjustCase::Diagonal => {
            let mut sum = 0.0;
            for a in 0..m {
                sum += kernel.eval_diag(&noise.shifted(x, a))?;
            }
            Ok(sum / m as f64)
        }
        AdjustCase::TestTrain => {
            let mut sum = 0.0;
            for a in 0..m {
                sum += kernel.eval(&noise.shifted(x, a), x2)?;
            }
            Ok(sum / m as f64)
        }
    }
}

/// Training inputs crossed with a frozen noise sample, reusable across
/// hyperparameter settings.
pub struct AdjustedDesign {
    x: DMatrix<f64>,
    sample: NoiseSample,
    points: PointSet,
    family: KernelFamily,
}

impl AdjustedDesign {
    pub fn new(x: &DMatrix<f64>, sample: &NoiseSample, family: KernelFamily) -> Result<Self> {
        check_dim(x.ncols(), sample.dim())?;
        Ok(AdjustedDesign {
            x: x.clone(),
            sample: sample.clone(),
            points: PointSet::perturbed(x, &sample.draws, family),
            family,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn sample(&self) -> &NoiseSample {
        &self.sample
    }

    fn check(&self, kernel: &KernelSpec) -> Result<()> {
        if kernel.family != self.family {
            return Err(Error::Config(format!(
                "design built for {} evaluated with {}",
                self.family.name(),
                kernel.family.name()
            )));
        }
        check_dim(kernel.input_dim, self.x.ncols())
    }

    /// Adjusted Gram: block averages off the diagonal, paired draws on it.
    pub fn gram(&self, kernel: &KernelSpec) -> Result<GramMatrix> {
        self.check(kernel)?;
        let n = self.n();
        let m = self.sample.m();
        let chains = self.points.diag_chains(kernel)?;
        let inv_m = 1.0 / m as f64;
        let inv_m2 = 1.0 / (m * m) as f64;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| -> Result<Vec<f64>> {
                let mut row = Vec::with_capacity(n - j);
                let mut diag = 0.0;
                for a in 0..m {
                    diag += chains.diag(j * m + a);
                }
                row.push(diag * inv_m);
                for k in (j + 1)..n {
                    let mut sum = 0.0;
                    for a in 0..m {
                        for b in 0..m {
                            sum += self.points.pair(kernel, &chains, j * m + a, k * m + b)?;
                        }
                    }
                    row.push(sum * inv_m2);
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let mut values = DMatrix::zeros(n, n);
        for (j, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                values[(j, j + off)] = v;
                values[(j + off, j)] = v;
            }
        }
        Ok(GramMatrix::new(values))
    }

    /// Cross matrix `k(x*, X)`: one row per test input, one column per training input.
    pub fn cross(&self, kernel: &KernelSpec, xstar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(kernel)?;
        check_dim(self.x.ncols(), xstar.ncols())?;
        let n = self.n();
        let m = self.sample.m();
        let chains = self.points.diag_chains(kernel)?;
        let mut out = DMatrix::zeros(xstar.nrows(), n);
        for (t, row) in xstar.row_iter().enumerate() {
            let q: Vec<f64> = row.iter().copied().collect();
            let q_aux = if kernel.family.is_composite() {
                kernel.diag_chain(crate::kernel::dot(&q, &q))?.aux
            } else {
                Vec::new()
            };
            for j in 0..n {
                let mut sum = 0.0;
                for a in 0..m {
                    sum += self.points.pair_external(kernel, &chains, j * m + a, &q, &q_aux)?;
                }
                out[(t, j)] = sum / m as f64;
            }
        }
        Ok(out)
    }

    /// Adjusted prior variance at a test input (paired-draw diagonal form).
    pub fn prior_var(&self, kernel: &KernelSpec, xstar: &[f64]) -> Result<f64> {
        adjusted_cov(xstar, xstar, AdjustCase::Diagonal, kernel, &self.sample)
    }
}

/// Adjusted symmetric Gram over the rows of `x`.
pub fn adjusted_gram(x: &DMatrix<f64>, kernel: &KernelSpec, noise: &NoiseSample) -> Result<GramMatrix> {
    check_dim(kernel.input_dim, x.ncols())?;
    AdjustedDesign::new(x, noise, kernel.family)?.gram(kernel)
}

/// Adjusted cross matrix `k(x*, X)` (test rows, training columns).
pub fn adjusted_cross(x: &DMatrix<f64>, xstar: &DMatrix<f64>, kernel: &KernelSpec, noise: &NoiseSample) -> Result<DMatrix<f64>> {
    check_dim(kernel.input_dim, x.ncols())?;
    AdjustedDesign::new(x, noise, kernel.family)?.cross(kernel, xstar)
}

/// Maximum coefficient of variation of the MC kernel estimate over the probe
/// pairs, estimated from [`CV_REPLICATES`] independent samples of size
/// `spec.mc_samples`. Equal pairs use the diagonal estimator.
pub fn check_cv(spec: &NoiseSpec, kernel: &KernelSpec, probe_pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    spec.validate()?;
    if probe_pairs.is_empty() {
        return Err(Error::Input("check_cv needs at least one probe pair".into()));
    }
    let dim = kernel.input_dim;
    let samples = (0..CV_REPLICATES)
        .map(|r| {
            let seed = derive_seed(spec.seed, &[CV_STREAM, r as u64]);
            draw_with_seed(spec, dim, spec.mc_samples, seed).map(|draws| NoiseSample { draws, cv_estimate: None })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for (x, x2) in probe_pairs {
        let case = if x == x2 { AdjustCase::Diagonal } else { AdjustCase::TrainTrain };
        let estimates = samples
            .iter()
            .map(|s| adjusted_cov(x, x2, case, kernel, s))
            .collect::<Result<Vec<_>>>()?;
        let k = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / k;
        let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (k - 1.0);
        let sd = var.sqrt();
        let cv = if sd == 0.0 { 0.0 } else { sd / mean.abs() };
        worst = worst.max(cv);
    }
    Ok(worst)
}

/// Picks up to `count` distinct random pairs of rows of `x`.
pub fn default_probe_pairs(x: &DMatrix<f64>, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = x.nrows();
    let row = |i: usize| x.row(i).iter().copied().collect::<Vec<f64>>();
    if n < 2 {
        return (0..n).map(|i| (row(i), row(i))).collect();
    }
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| {
            let idx = sample_indices(&mut rng, n, 2);
            (row(idx.index(0)), row(idx.index(1)))
        })
        .collect()
}

/// Doubles `mc_samples` until the CV rule holds or the ceiling is reached.
/// Returns the (possibly enlarged) spec and the final CV estimate.
pub fn calibrate_mc_samples(
    spec: &NoiseSpec,
    kernel: &KernelSpec,
    probe_pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<(NoiseSpec, f64)> {
    let mut current = spec.clone();
    loop {
        let cv = check_cv(&current, kernel, probe_pairs)?;
        if cv <= CV_TARGET {
            return Ok((current, cv));
        }
        if current.mc_samples >= MAX_MC_SAMPLES {
            log::warn!(
                "MC sample ceiling {} reached with coefficient of variation {:.4} > {}",
                MAX_MC_SAMPLES,
                cv,
                CV_TARGET
            );
            return Ok((current, cv));
        }
        current.mc_samples = (current.mc_samples * 2).min(MAX_MC_SAMPLES);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{composite_cov, KernelFamily};

    fn acos(d: usize) -> KernelSpec {
        KernelSpec::composite(KernelFamily::ArcCosine, 2, 0.5, 1.5, d)
    }

    #[test]
    fn zero_variance_draws_are_zero() {
        let s = draw_noise(&NoiseSpec::isotropic(0.0, 10, 3), 2).unwrap();
        assert!(s.draws.iter().all(|v| *v == 0.0));
        assert_eq!(s.m(), 10);
    }

    #[test]
    fn same_seed_same_draws() {
        let spec = NoiseSpec::isotropic(0.3, 16, 42);
        assert_eq!(draw_noise(&spec, 3).unwrap(), draw_noise(&spec, 3).unwrap());
        let other = NoiseSpec { seed: 43, ..spec.clone() };
        assert_ne!(draw_noise(&spec, 3).unwrap(), draw_noise(&other, 3).unwrap());
    }

    #[test]
    fn sample_variance_close_to_target() {
        let s = draw_noise(&NoiseSpec::isotropic(0.1, 10_000, 5), 1).unwrap();
        let m = s.m() as f64;
        let mean = s.draws.iter().sum::<f64>() / m;
        let var = s.draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!((0.095..=0.105).contains(&var), "variance {var}");
    }

    #[test]
    fn diagonal_distribution_checks_width() {
        let spec = NoiseSpec {
            distribution: NoiseDistribution::GaussianDiagonal { variances: vec![0.1, 0.2] },
            ..NoiseSpec::isotropic(0.0, 4, 1)
        };
        assert!(draw_noise(&spec, 2).is_ok());
        assert!(matches!(draw_noise(&spec, 3), Err(Error::Dimension { .. })));
    }

    struct Failing;
    impl NoiseSampler for Failing {
        fn sample(&self, _: &mut dyn RngCore, _: usize) -> std::result::Result<Vec<f64>, String> {
            Err("device offline".into())
        }
    }

    struct Uniform;
    impl NoiseSampler for Uniform {
        fn sample(&self, rng: &mut dyn RngCore, dim: usize) -> std::result::Result<Vec<f64>, String> {
            Ok((0..dim).map(|_| rng.random::<f64>() - 0.5).collect())
        }
    }

    #[test]
    fn custom_sampler_used_and_errors_propagate() {
        let mut spec = NoiseSpec::isotropic(0.0, 8, 9);
        spec.distribution = NoiseDistribution::Custom(Arc::new(Uniform));
        let s = draw_noise(&spec, 2).unwrap();
        assert!(s.draws.iter().all(|v| v.abs() <= 0.5));
        assert_eq!(s, draw_noise(&spec, 2).unwrap());
        spec.distribution = NoiseDistribution::Custom(Arc::new(Failing));
        assert!(matches!(draw_noise(&spec, 2), Err(Error::Numeric(_))));
    }

    #[test]
    fn standardized_noise_scales_draws() {
        let spec = NoiseSpec::isotropic(0.04, 50, 2);
        let scaled = spec.standardized(&[2.0, 0.5]).unwrap();
        assert!(scaled.standardization_adjusted);
        assert_eq!(
            scaled.distribution,
            NoiseDistribution::GaussianDiagonal { variances: vec![0.01, 0.16] }
        );
    }

    #[test]
    fn zero_noise_collapses_every_case() {
        let k = acos(2);
        let zero = draw_noise(&NoiseSpec::isotropic(0.0, 7, 1), 2).unwrap();
        let (x, y) = ([0.3, -0.2], [1.0, 0.4]);
        let plain = composite_cov(&x, &y, &k).unwrap();
        let tt = adjusted_cov(&x, &y, AdjustCase::TrainTrain, &k, &zero).unwrap();
        assert!((tt - plain).abs() <= 1e-14 * plain.abs());
        let ts = adjusted_cov(&x, &x, AdjustCase::TestTrain, &k, &zero).unwrap();
        let diag = composite_cov(&x, &x, &k).unwrap();
        assert!((ts - diag).abs() <= 1e-14 * diag);
        let dg = adjusted_cov(&x, &x, AdjustCase::Diagonal, &k, &zero).unwrap();
        assert!((dg - diag).abs() <= 1e-14 * diag);
    }

    #[test]
    fn adjusted_gram_matches_scalar_path() {
        let k = acos(2);
        let noise = draw_noise(&NoiseSpec::isotropic(0.05, 6, 11), 2).unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.5, -0.5, 2.0, 0.1]);
        let g = adjusted_gram(&x, &k, &noise).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let xi: Vec<f64> = x.row(i).iter().copied().collect();
                let xj: Vec<f64> = x.row(j).iter().copied().collect();
                let case = if i == j { AdjustCase::Diagonal } else { AdjustCase::TrainTrain };
                let v = adjusted_cov(&xi, &xj, case, &k, &noise).unwrap();
                assert!((g.values[(i, j)] - v).abs() <= 1e-12 * v.abs().max(1.0), "({i},{j})");
            }
        }
        let xs = DMatrix::from_row_slice(2, 2, &[0.2, 0.2, -1.0, 3.0]);
        let c = adjusted_cross(&x, &xs, &k, &noise).unwrap();
        for t in 0..2 {
            for j in 0..3 {
                let xj: Vec<f64> = x.row(j).iter().copied().collect();
                let q: Vec<f64> = xs.row(t).iter().copied().collect();
                let v = adjusted_cov(&xj, &q, AdjustCase::TestTrain, &k, &noise).unwrap();
                assert!((c[(t, j)] - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn cv_of_degenerate_noise_is_zero() {
        let k = acos(1);
        let pairs = vec![(vec![0.1], vec![0.7]), (vec![0.3], vec![0.3])];
        assert!(check_cv(&NoiseSpec::isotropic(0.0, 4, 1), &k, &pairs).unwrap() < 1e-12);
        assert!(check_cv(&NoiseSpec::isotropic(0.0, 4, 1), &k, &[]).is_err());
    }

    #[test]
    fn large_m_meets_cv_target() {
        let k = KernelSpec::rbf(1.0, 1.0, 1);
        let pairs = vec![(vec![0.0], vec![0.8])];
        let cv = check_cv(&NoiseSpec::isotropic(0.1, 400, 3), &k, &pairs).unwrap();
        assert!(cv < CV_TARGET, "cv {cv}");
    }

    #[test]
    fn calibration_escalates_until_target() {
        let k = KernelSpec::rbf(0.3, 1.0, 1);
        let pairs = vec![(vec![0.0], vec![0.9])];
        let start = NoiseSpec::isotropic(0.2, 2, 5);
        let (spec, cv) = calibrate_mc_samples(&start, &k, &pairs).unwrap();
        assert!(spec.mc_samples > 2);
        assert!(cv <= CV_TARGET || spec.mc_samples == MAX_MC_SAMPLES);
    }

    #[test]
    fn probe_pairs_are_distinct_rows() {
        let x = DMatrix::from_fn(8, 1, |i, _| i as f64);
        let pairs = default_probe_pairs(&x, 5, 1);
        assert_eq!(pairs.len(), 5);
        assert!(pairs.iter().all(|(a, b)| a != b));
    }

    #[test]
    fn config_repr_round_trip() {
        let spec: NoiseSpec = toml::from_str("distribution = \"gaussian_isotropic\"\nsigma_u_sq = 0.1\nmc_samples = 40\nseed = 3\n").unwrap();
        assert_eq!(spec, NoiseSpec::isotropic(0.1, 40, 3));
        assert!(toml::from_str::<NoiseSpec>("distribution = \"gaussian_isotropic\"\nsigma_u_sq = 0.1\nbogus = 1\n").is_err());
        assert!(toml::from_str::<NoiseSpec>("distribution = \"laplace\"\nsigma_u_sq = 0.1\n").is_err());
        assert!(toml::from_str::<NoiseSpec>("distribution = \"gaussian_isotropic\"\nsigma_u_sq = 0.1\nmc_samples = 1\n").is_err());
    }
}
