use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Closed-form test function on an interval.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetFunction {
    /// Triangle wave `|x − 2·round(x/2)|`: period 2, range [0, 1].
    Zigzag {
        #[serde(default = "zigzag_domain")]
        domain: [f64; 2],
    },
    /// `tanh(10 sin x)`: smooth, period 2π, range (−1, 1).
    NearSquareWave {
        #[serde(default = "square_domain")]
        domain: [f64; 2],
    },
    Linear {
        slope: f64,
        #[serde(default)]
        intercept: f64,
        domain: [f64; 2],
    },
    #[serde(skip)]
    Custom {
        label: String,
        domain: [f64; 2],
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

fn zigzag_domain() -> [f64; 2] {
    [0.0, 4.0]
}

fn square_domain() -> [f64; 2] {
    [0.0, 4.0 * std::f64::consts::PI]
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}", self.label(), self.domain())
    }
}

impl PartialEq for TargetFunction {
    fn eq(&self, other: &Self) -> bool {
        use TargetFunction::*;
        match (self, other) {
            (Zigzag { domain: a }, Zigzag { domain: b }) => a == b,
            (NearSquareWave { domain: a }, NearSquareWave { domain: b }) => a == b,
            (Linear { slope: s1, intercept: i1, domain: d1 }, Linear { slope: s2, intercept: i2, domain: d2 }) => {
                s1 == s2 && i1 == i2 && d1 == d2
            }
            (Custom { f: a, .. }, Custom { f: b, .. }) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl TargetFunction {
    pub fn zigzag() -> Self {
        TargetFunction::Zigzag { domain: zigzag_domain() }
    }

    pub fn near_square_wave() -> Self {
        TargetFunction::NearSquareWave { domain: square_domain() }
    }

    pub fn custom(label: &str, domain: [f64; 2], f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TargetFunction::Custom { label: label.to_string(), domain, f: Arc::new(f) }
    }

    pub fn label(&self) -> &str {
        match self {
            TargetFunction::Zigzag { .. } => "zigzag",
            TargetFunction::NearSquareWave { .. } => "near_square_wave",
            TargetFunction::Linear { .. } => "linear",
            TargetFunction::Custom { label, .. } => label,
        }
    }

    pub fn domain(&self) -> [f64; 2] {
        match self {
            TargetFunction::Zigzag { domain }
            | TargetFunction::NearSquareWave { domain }
            | TargetFunction::Linear { domain, .. }
            | TargetFunction::Custom { domain, .. } => *domain,
        }
    }

    /// Function value without domain checks (used for noise-shifted inputs).
    pub fn value(&self, x: f64) -> f64 {
        match self {
            TargetFunction::Zigzag { .. } => (x - 2.0 * (x / 2.0).round()).abs(),
            TargetFunction::NearSquareWave { .. } => (10.0 * x.sin()).tanh(),
            TargetFunction::Linear { slope, intercept, .. } => intercept + slope * x,
            TargetFunction::Custom { f, .. } => f(x),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let [a, b] = self.domain();
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(crate::Error::Config(format!("target domain [{a}, {b}] must be a finite interval")));
        }
        Ok(())
    }
}

/// Evaluates the target, clamping `x` into the domain with a warning.
pub fn eval_target(target: &TargetFunction, x: f64) -> f64 {
    let [a, b] = target.domain();
    let xc = x.clamp(a, b);
    if xc != x {
        log::warn!("{} evaluated at {x} outside [{a}, {b}]; clamped", target.label());
    }
    target.value(xc)
}

/// `√(dy² + dz²)`.
pub fn total_deformation(dy: f64, dz: f64) -> f64 {
    dy.hypot(dz)
}
