//! Noise-free covariance functions.
//!
//! Composite kernels start from the dot-product base covariance
//! `σ_b² + (σ_w²/d)·x·x'` and apply a layer map `depth` times. Each layer map
//! needs the two diagonal values and the off-diagonal value of the previous
//! layer, so the recursion threads all three. On the diagonal only the
//! single-argument recursion is needed, which skips the angle entirely.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::points::PointSet;

/// Ratios outside `[-1, 1]` by more than this are treated as invalid input
/// rather than rounding noise.
pub const CLAMP_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Dot-product covariance of the input layer only.
    Base,
    /// ReLU layer map.
    ArcCosine,
    /// Error-function layer map.
    ArcSine,
    Rbf,
    /// Matérn with ν = 1/2 (exponential kernel).
    MaternHalf,
}

impl KernelFamily {
    pub fn is_composite(self) -> bool {
        matches!(self, KernelFamily::Base | KernelFamily::ArcCosine | KernelFamily::ArcSine)
    }

    pub fn is_shallow(self) -> bool {
        !self.is_composite()
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Base => "base",
            KernelFamily::ArcCosine => "arc_cosine",
            KernelFamily::ArcSine => "arc_sine",
            KernelFamily::Rbf => "rbf",
            KernelFamily::MaternHalf => "matern_half",
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Declarative kernel description.
///
/// Composite families use `sigma_b_sq`, `sigma_w_sq` and `depth`; shallow
/// families use `length_scale` and `signal_var`. The unused fields are kept so
/// a spec round-trips through config files unchanged. Hyperparameters are
/// shared by every layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default)]
    pub depth: usize,
    #[serde(default = "one")]
    pub sigma_b_sq: f64,
    #[serde(default = "one")]
    pub sigma_w_sq: f64,
    #[serde(default = "one")]
    pub length_scale: f64,
    #[serde(default = "one")]
    pub signal_var: f64,
    /// Zero means "take it from the data" when a spec is read from a config.
    #[serde(default)]
    pub input_dim: usize,
}

impl KernelSpec {
    pub fn composite(family: KernelFamily, depth: usize, sigma_b_sq: f64, sigma_w_sq: f64, input_dim: usize) -> Self {
        KernelSpec {
            family,
            depth,
            sigma_b_sq,
            sigma_w_sq,
            length_scale: 1.0,
            signal_var: 1.0,
            input_dim,
        }
    }

    pub fn shallow(family: KernelFamily, length_scale: f64, signal_var: f64, input_dim: usize) -> Self {
        KernelSpec {
            family,
            depth: 0,
            sigma_b_sq: 1.0,
            sigma_w_sq: 1.0,
            length_scale,
            signal_var,
            input_dim,
        }
    }

    pub fn rbf(length_scale: f64, signal_var: f64, input_dim: usize) -> Self {
        Self::shallow(KernelFamily::Rbf, length_scale, signal_var, input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.family.is_composite() {
            positive("sigma_w_sq", self.sigma_w_sq)?;
            if !(self.sigma_b_sq.is_finite() && self.sigma_b_sq >= 0.0) {
                return Err(Error::Config(format!(
                    "sigma_b_sq must be nonnegative and finite, got {}",
                    self.sigma_b_sq
                )));
            }
        } else {
            positive("length_scale", self.length_scale)?;
            positive("signal_var", self.signal_var)?;
        }
        Ok(())
    }

    /// Number of layer maps actually applied.
    pub fn layers(&self) -> usize {
        match self.family {
            KernelFamily::ArcCosine | KernelFamily::ArcSine => self.depth,
            _ => 0,
        }
    }

    /// Evaluates `k(x, x2)` through the general path.
    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        if self.family.is_composite() {
            composite_cov(x, x2, self)
        } else {
            shallow_cov(x, x2, self)
        }
    }

    /// Evaluates `k(x, x)` with the single-argument recursion.
    pub fn eval_diag(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim, x.len())?;
        if self.family.is_composite() {
            let chain = self.diag_chain(dot(x, x))?;
            Ok(chain.last())
        } else {
            Ok(self.signal_var)
        }
    }

    /// Symmetric Gram matrix over the rows of `x`.
    pub fn gram(&self, x: &DMatrix<f64>) -> Result<GramMatrix> {
        check_dim(self.input_dim, x.ncols())?;
        let points = PointSet::new(x.clone(), self.family);
        let chains = points.diag_chains(self)?;
        let n = x.nrows();
        let mut values = DMatrix::zeros(n, n);
        for i in 0..n {
            values[(i, i)] = chains.diag(i);
            for j in (i + 1)..n {
                let v = points.pair(self, &chains, i, j)?;
                values[(i, j)] = v;
                values[(j, i)] = v;
            }
        }
        Ok(GramMatrix { values, jitter_applied: 0.0 })
    }

    /// Cross-covariance matrix with rows indexed by `a` and columns by `b`.
    pub fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.input_dim, a.ncols())?;
        check_dim(self.input_dim, b.ncols())?;
        let mut out = DMatrix::zeros(a.nrows(), b.nrows());
        let rows_a: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
        let rows_b: Vec<Vec<f64>> = b.row_iter().map(|r| r.iter().copied().collect()).collect();
        for (i, ra) in rows_a.iter().enumerate() {
            for (j, rb) in rows_b.iter().enumerate() {
                out[(i, j)] = self.eval(ra, rb)?;
            }
        }
        Ok(out)
    }

    pub(crate) fn base_from_dot(&self, dot: f64) -> f64 {
        self.sigma_b_sq + self.sigma_w_sq / self.input_dim as f64 * dot
    }

    pub(crate) fn shallow_from_sqdist(&self, sqdist: f64) -> f64 {
        let r2 = sqdist.max(0.0);
        match self.family {
            KernelFamily::Rbf => self.signal_var * (-r2 / (2.0 * self.length_scale * self.length_scale)).exp(),
            KernelFamily::MaternHalf => self.signal_var * (-r2.sqrt() / self.length_scale).exp(),
            _ => unreachable!("shallow_from_sqdist on composite family"),
        }
    }

    /// Diagonal recursion `c^0(x,x) … c^L(x,x)` from the squared norm of `x`,
    /// plus the per-layer factor the off-diagonal map needs.
    pub(crate) fn diag_chain(&self, sq_norm: f64) -> Result<DiagChain> {
        let layers = self.layers();
        let mut values = Vec::with_capacity(layers + 1);
        let mut aux = Vec::with_capacity(layers);
        let mut c = self.base_from_dot(sq_norm);
        values.push(c);
        for _ in 0..layers {
            aux.push(self.layer_aux(c)?);
            c = self.layer_diag(c);
            values.push(c);
        }
        Ok(DiagChain { values, aux })
    }

    /// Per-point factor used by the off-diagonal layer map: `√c` for the
    /// arc-cosine map, `1/√(1+2c)` for the arc-sine map.
    pub(crate) fn layer_aux(&self, c_diag: f64) -> Result<f64> {
        match self.family {
            KernelFamily::ArcCosine => {
                if c_diag > 0.0 && c_diag.is_finite() {
                    Ok(c_diag.sqrt())
                } else {
                    Err(Error::Numeric(format!("arc-cosine layer needs positive diagonal, got {c_diag}")))
                }
            }
            KernelFamily::ArcSine => {
                let den = 1.0 + 2.0 * c_diag;
                if den > 0.0 && den.is_finite() {
                    Ok(1.0 / den.sqrt())
                } else {
                    Err(Error::Numeric(format!("arc-sine layer needs 1 + 2c > 0, got {den}")))
                }
            }
            _ => unreachable!("layer map on non-layered family"),
        }
    }

    /// Single-argument layer map (no angle).
    pub(crate) fn layer_diag(&self, c_diag: f64) -> f64 {
        match self.family {
            KernelFamily::ArcCosine => self.sigma_b_sq + 0.5 * self.sigma_w_sq * c_diag,
            KernelFamily::ArcSine => {
                let r = (2.0 * c_diag / (1.0 + 2.0 * c_diag)).min(1.0);
                self.sigma_b_sq + 2.0 * self.sigma_w_sq / PI * r.asin()
            }
            _ => unreachable!("layer map on non-layered family"),
        }
    }

    /// General layer map given both per-point factors and the off-diagonal value.
    #[inline]
    pub(crate) fn layer_off(&self, aux_a: f64, aux_b: f64, c_ab: f64) -> Result<f64> {
        match self.family {
            KernelFamily::ArcCosine => {
                let scale = aux_a * aux_b;
                let rho = clamp_unit(c_ab / scale)?;
                let theta = rho.acos();
                let sin_theta = (1.0 - rho * rho).max(0.0).sqrt();
                Ok(self.sigma_b_sq
                    + self.sigma_w_sq / (2.0 * PI) * scale * (sin_theta + (PI - theta) * rho))
            }
            KernelFamily::ArcSine => {
                let r = clamp_unit(2.0 * c_ab * aux_a * aux_b)?;
                Ok(self.sigma_b_sq + 2.0 * self.sigma_w_sq / PI * r.asin())
            }
            _ => unreachable!("layer map on non-layered family"),
        }
    }
}

/// Diagonal recursion values for one point.
#[derive(Clone, Debug)]
pub(crate) struct DiagChain {
    pub values: Vec<f64>,
    pub aux: Vec<f64>,
}

impl DiagChain {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("chain has the base value")
    }
}

#[inline]
fn clamp_unit(r: f64) -> Result<f64> {
    if r.is_nan() || r.abs() > 1.0 + CLAMP_TOLERANCE {
        Err(Error::Numeric(format!("normalized covariance {r} outside [-1, 1]")))
    } else {
        Ok(r.clamp(-1.0, 1.0))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Base covariance `σ_b² + (σ_w²/d)·(x·x2)`.
pub fn base_cov(x: &[f64], x2: &[f64], spec: &KernelSpec) -> Result<f64> {
    check_dim(spec.input_dim, x.len())?;
    check_dim(spec.input_dim, x2.len())?;
    Ok(spec.base_from_dot(dot(x, x2)))
}

fn layer_spec(family: KernelFamily, spec: &KernelSpec) -> KernelSpec {
    KernelSpec { family, ..spec.clone() }
}

/// One arc-cosine (ReLU) layer map applied to a covariance triple.
pub fn arccos_layer(c_xx: f64, c_x2x2: f64, c_xx2: f64, spec: &KernelSpec) -> Result<f64> {
    let s = layer_spec(KernelFamily::ArcCosine, spec);
    s.layer_off(s.layer_aux(c_xx)?, s.layer_aux(c_x2x2)?, c_xx2)
}

/// One arc-sine (erf) layer map applied to a covariance triple.
pub fn arcsin_layer(c_xx: f64, c_x2x2: f64, c_xx2: f64, spec: &KernelSpec) -> Result<f64> {
    let s = layer_spec(KernelFamily::ArcSine, spec);
    s.layer_off(s.layer_aux(c_xx)?, s.layer_aux(c_x2x2)?, c_xx2)
}

/// Composite covariance `c^L(x, x2)` by full recursion over the triple.
pub fn composite_cov(x: &[f64], x2: &[f64], spec: &KernelSpec) -> Result<f64> {
    if !spec.family.is_composite() {
        return Err(Error::Config(format!("{} is not a composite family", spec.family.name())));
    }
    let mut c_xx = base_cov(x, x, spec)?;
    let mut c_yy = base_cov(x2, x2, spec)?;
    let mut c_xy = base_cov(x, x2, spec)?;
    for _ in 0..spec.layers() {
        let ax = spec.layer_aux(c_xx)?;
        let ay = spec.layer_aux(c_yy)?;
        let next_xy = spec.layer_off(ax, ay, c_xy)?;
        c_xx = spec.layer_off(ax, ax, c_xx)?;
        c_yy = spec.layer_off(ay, ay, c_yy)?;
        c_xy = next_xy;
    }
    Ok(c_xy)
}

/// RBF or Matérn-1/2 covariance.
pub fn shallow_cov(x: &[f64], x2: &[f64], spec: &KernelSpec) -> Result<f64> {
    if !spec.family.is_shallow() {
        return Err(Error::Config(format!("{} is not a shallow family", spec.family.name())));
    }
    check_dim(spec.input_dim, x.len())?;
    check_dim(spec.input_dim, x2.len())?;
    Ok(spec.shallow_from_sqdist(sqdist(x, x2)))
}

/// Symmetric covariance matrix plus the diagonal jitter that made it factorizable.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub jitter_applied: f64,
}

impl GramMatrix {
    pub fn new(values: DMatrix<f64>) -> Self {
        GramMatrix { values, jitter_applied: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}
