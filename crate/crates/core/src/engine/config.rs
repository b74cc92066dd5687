use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::dataset::Standardize;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Estimable hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    SigmaBSq,
    SigmaWSq,
    LengthScale,
    SignalVar,
    SigmaEpsSq,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::SigmaBSq => "sigma_b_sq",
            Param::SigmaWSq => "sigma_w_sq",
            Param::LengthScale => "length_scale",
            Param::SignalVar => "signal_var",
            Param::SigmaEpsSq => "sigma_eps_sq",
        }
    }

    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            Param::SigmaBSq | Param::SigmaWSq | Param::SignalVar => (1e-3, 1e3),
            Param::LengthScale => (1e-2, 1e2),
            Param::SigmaEpsSq => (1e-6, 1.0),
        }
    }

    /// Parameters a kernel of this family carries, in a fixed order.
    pub fn for_kernel(kernel: &KernelSpec) -> [Param; 2] {
        if kernel.family.is_composite() {
            [Param::SigmaBSq, Param::SigmaWSq]
        } else {
            [Param::LengthScale, Param::SignalVar]
        }
    }

    pub fn get(self, kernel: &KernelSpec, sigma_eps_sq: f64) -> f64 {
        match self {
            Param::SigmaBSq => kernel.sigma_b_sq,
            Param::SigmaWSq => kernel.sigma_w_sq,
            Param::LengthScale => kernel.length_scale,
            Param::SignalVar => kernel.signal_var,
            Param::SigmaEpsSq => sigma_eps_sq,
        }
    }

    pub fn set(self, kernel: &mut KernelSpec, sigma_eps_sq: &mut f64, value: f64) {
        match self {
            Param::SigmaBSq => kernel.sigma_b_sq = value,
            Param::SigmaWSq => kernel.sigma_w_sq = value,
            Param::LengthScale => kernel.length_scale = value,
            Param::SignalVar => kernel.signal_var = value,
            Param::SigmaEpsSq => *sigma_eps_sq = value,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptMethod {
    #[default]
    MultistartGradient,
    Grid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendMode {
    /// β re-estimated by generalized least squares inside every likelihood evaluation.
    #[default]
    Gls,
    /// β from ordinary least squares once; the GP is fitted to the residuals.
    TwoStage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub mode: TrendMode,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig { enabled: false, intercept: true, mode: TrendMode::Gls }
    }
}

impl TrendConfig {
    pub fn linear() -> Self {
        TrendConfig { enabled: true, ..Default::default() }
    }
}

fn yes() -> bool {
    true
}
fn default_restarts() -> usize {
    10
}
fn default_max_iter() -> usize {
    100
}
fn default_sigma_eps_sq() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptConfig {
    #[serde(default)]
    pub method: OptMethod,
    /// Number of ascent runs; the first starts from the configured values,
    /// the rest from uniform draws in the log-bounds.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    /// Starting (or, when pinned, fixed) observation-noise variance.
    #[serde(default = "default_sigma_eps_sq")]
    pub sigma_eps_sq: f64,
    /// Overrides of [`Param::default_bounds`], as `[lo, hi]`.
    #[serde(default)]
    pub bounds: BTreeMap<Param, [f64; 2]>,
    /// Values per axis for grid search; missing free axes stay at their start value.
    #[serde(default)]
    pub grid: BTreeMap<Param, Vec<f64>>,
    /// Parameters held fixed at the given value.
    #[serde(default)]
    pub pinned: BTreeMap<Param, f64>,
    #[serde(default)]
    pub trend: TrendConfig,
    #[serde(default)]
    pub standardize: Standardize,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            method: OptMethod::MultistartGradient,
            restarts: default_restarts(),
            max_iter: default_max_iter(),
            seed: 0,
            sigma_eps_sq: default_sigma_eps_sq(),
            bounds: BTreeMap::new(),
            grid: BTreeMap::new(),
            pinned: BTreeMap::new(),
            trend: TrendConfig::default(),
            standardize: Standardize::None,
        }
    }
}

impl OptConfig {
    pub fn bound(&self, p: Param) -> (f64, f64) {
        self.bounds.get(&p).map(|b| (b[0], b[1])).unwrap_or_else(|| p.default_bounds())
    }

    pub fn pin(mut self, p: Param, value: f64) -> Self {
        self.pinned.insert(p, value);
        self
    }

    pub fn validate(&self, kernel: Option<&KernelSpec>) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if !(self.sigma_eps_sq.is_finite() && self.sigma_eps_sq >= 0.0) {
            return Err(Error::Config("sigma_eps_sq must be nonnegative".into()));
        }
        let allowed: Vec<Param> = match kernel {
            Some(k) => {
                let mut v = Param::for_kernel(k).to_vec();
                v.push(Param::SigmaEpsSq);
                v
            }
            None => vec![Param::SigmaEpsSq],
        };
        let check_known = |p: &Param, what: &str| {
            if allowed.contains(p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} names `{}`, which this model does not have", p.name())))
            }
        };
        for (p, [lo, hi]) in &self.bounds {
            check_known(p, "bounds")?;
            if !(lo.is_finite() && hi.is_finite() && *lo > 0.0 && lo <= hi) {
                return Err(Error::Config(format!("bounds for {} must satisfy 0 < lo <= hi", p.name())));
            }
        }
        for (p, v) in &self.pinned {
            check_known(p, "pinned")?;
            let ok = if *p == Param::SigmaEpsSq || *p == Param::SigmaBSq { *v >= 0.0 } else { *v > 0.0 };
            if !(v.is_finite() && ok) {
                return Err(Error::Config(format!("pinned {} has invalid value {v}", p.name())));
            }
        }
        for (p, axis) in &self.grid {
            check_known(p, "grid")?;
            if axis.is_empty() || axis.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Config(format!("grid axis {} must be a nonempty list of positive values", p.name())));
            }
        }
        Ok(())
    }
}
