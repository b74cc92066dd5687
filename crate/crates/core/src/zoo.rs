//! The five named models behind one train/predict/serialize façade.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::config::OptConfig;
use crate::engine::dataset::{Dataset, Standardization};
use crate::engine::model::{fit, RestartRecord, TrainedModel, TrendFit};
use crate::engine::config::Param;
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::noise::NoiseSpec;

pub const MODEL_FORMAT: &str = "nngpiu-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Linear trend only, no GP term.
    Linear,
    ShallowGp,
    Nngp,
    /// Shallow kernel with the input-noise adjustment (kriging adjusting for location error).
    Kale,
    /// Composite kernel with the input-noise adjustment.
    Nngpiu,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Linear, ModelKind::ShallowGp, ModelKind::Nngp, ModelKind::Kale, ModelKind::Nngpiu];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::ShallowGp => "shallow_gp",
            ModelKind::Nngp => "nngp",
            ModelKind::Kale => "kale",
            ModelKind::Nngpiu => "nngpiu",
        }
    }

    pub fn infer(kernel: Option<&KernelSpec>, has_noise: bool) -> ModelKind {
        match (kernel.map(|k| k.family.is_composite()), has_noise) {
            (None, _) => ModelKind::Linear,
            (Some(false), false) => ModelKind::ShallowGp,
            (Some(false), true) => ModelKind::Kale,
            (Some(true), false) => ModelKind::Nngp,
            (Some(true), true) => ModelKind::Nngpiu,
        }
    }

    pub fn wants_noise(self) -> bool {
        matches!(self, ModelKind::Kale | ModelKind::Nngpiu)
    }

    pub fn wants_composite(self) -> Option<bool> {
        match self {
            ModelKind::Linear => None,
            ModelKind::ShallowGp | ModelKind::Kale => Some(false),
            ModelKind::Nngp | ModelKind::Nngpiu => Some(true),
        }
    }

    /// Kernel used when a config names the model but gives no kernel.
    pub fn default_kernel(self) -> Option<KernelSpec> {
        match self.wants_composite()? {
            true => Some(KernelSpec::composite(KernelFamily::ArcSine, 2, 1.0, 1.0, 0)),
            false => Some(KernelSpec::rbf(1.0, 1.0, 0)),
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Label used in reports; defaults to the model kind's name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    /// Adds a linear mean `β₀ + Σ β_j x_j`. Always on for the linear model.
    #[serde(default, skip_serializing_if = "is_false")]
    pub trend: bool,
    #[serde(default)]
    pub opt: OptConfig,
}

impl ModelConfig {
    pub fn new(model: ModelKind, kernel: Option<KernelSpec>, noise: Option<NoiseSpec>) -> Self {
        ModelConfig { label: None, model, kernel, noise, trend: model == ModelKind::Linear, opt: OptConfig::default() }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.model.name().to_string())
    }

    /// Kernel actually used: the configured one, or the model's default.
    pub fn effective_kernel(&self) -> Option<KernelSpec> {
        match self.model {
            ModelKind::Linear => None,
            m => self.kernel.clone().or_else(|| m.default_kernel()),
        }
    }

    /// Optimizer settings with the trend switch folded in.
    pub fn effective_opt(&self) -> OptConfig {
        let mut opt = self.opt.clone();
        opt.trend.enabled = self.trend || self.model == ModelKind::Linear;
        opt
    }

    pub fn validate(&self) -> Result<()> {
        let label = self.label();
        let bad = |msg: String| Err(Error::Config(format!("model `{label}`: {msg}")));
        match (self.model.wants_composite(), &self.kernel) {
            (None, Some(_)) => return bad("the linear model takes no kernel".into()),
            (Some(composite), Some(k)) if k.family.is_composite() != composite => {
                let want = if composite { "a composite (base, arc_cosine, arc_sine)" } else { "a shallow (rbf, matern_half)" };
                return bad(format!("{} needs {want} kernel, got {}", self.model.name(), k.family.name()));
            }
            _ => {}
        }
        match (self.model.wants_noise(), &self.noise) {
            (true, None) => return bad(format!("{} requires a noise section", self.model.name())),
            (false, Some(_)) => return bad(format!("{} takes no input noise", self.model.name())),
            (true, Some(n)) => n.validate()?,
            _ => {}
        }
        if self.opt.trend.enabled && !self.trend {
            return bad("enable the trend with `trend = true` on the model".into());
        }
        if let Some(k) = self.effective_kernel() {
            let mut probe = k.clone();
            if probe.input_dim == 0 {
                probe.input_dim = 1;
            }
            probe.validate()?;
        }
        self.opt.validate(self.effective_kernel().as_ref())
    }
}

/// Validates `config` and fits it to `data`.
pub fn build_and_fit(config: &ModelConfig, data: &Dataset) -> Result<TrainedModel> {
    config.validate()?;
    let kernel = config.effective_kernel();
    let mut model = fit(data, kernel.as_ref(), config.noise.as_ref(), &config.effective_opt())?;
    model.kind = config.model;
    Ok(model)
}

/// One independent model per output column; no cross-output covariance.
pub fn fit_per_output(config: &ModelConfig, inputs: &DMatrix<f64>, input_names: &[String], outputs: &[(String, DVector<f64>)]) -> Vec<Result<TrainedModel>> {
    outputs
        .par_iter()
        .map(|(name, y)| {
            let data = Dataset::with_names(inputs.clone(), y.clone(), input_names.to_vec(), name.clone())?;
            build_and_fit(config, &data)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataRecord {
    input_names: Vec<String>,
    target_name: String,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FittedRecord {
    #[serde(default)]
    kernel: Option<KernelSpec>,
    #[serde(default)]
    noise: Option<NoiseSpec>,
    sigma_eps_sq: f64,
    #[serde(default)]
    trend: Option<TrendFit>,
    #[serde(default)]
    standardization: Option<Standardization>,
    free_params: Vec<Param>,
    log_likelihood: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    kind: ModelKind,
    opt: OptConfig,
    fitted: FittedRecord,
    train_log: Vec<RestartRecord>,
    data: DataRecord,
}

/// Self-describing JSON document: settings, fitted hyperparameters, noise
/// seed and sample size, and the training data with its checksum.
pub fn serialize(model: &TrainedModel) -> Result<String> {
    let d = &model.data;
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        kind: model.kind,
        opt: model.opt.clone(),
        fitted: FittedRecord {
            kernel: model.kernel.clone(),
            noise: model.noise.clone(),
            sigma_eps_sq: model.sigma_eps_sq,
            trend: model.trend.clone(),
            standardization: model.standardization.clone(),
            free_params: model.free_params.clone(),
            log_likelihood: model.log_likelihood.is_finite().then_some(model.log_likelihood),
        },
        train_log: model.train_log.clone(),
        data: DataRecord {
            input_names: d.input_names.clone(),
            target_name: d.target_name.clone(),
            inputs: (0..d.n()).map(|i| d.row(i)).collect(),
            targets: d.targets.iter().copied().collect(),
            checksum: d.checksum(),
        },
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
}

/// Reads a model file and re-conditions it on the stored data.
pub fn deserialize(text: &str) -> Result<TrainedModel> {
    let header: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    match header.get("format").and_then(|v| v.as_str()) {
        Some(MODEL_FORMAT) => {}
        other => return Err(Error::Format(format!("not a model file (format {other:?})"))),
    }
    match header.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(MODEL_VERSION) => {}
        other => return Err(Error::Format(format!("unsupported model version {other:?}, expected {MODEL_VERSION}"))),
    }
    let file: ModelFile = serde_json::from_value(header).map_err(|e| Error::Format(e.to_string()))?;

    let rec = &file.data;
    let dim = rec.input_names.len();
    if rec.inputs.len() != rec.targets.len() || rec.inputs.iter().any(|r| r.len() != dim) {
        return Err(Error::Format("training data shape is inconsistent".into()));
    }
    let flat: Vec<f64> = rec.inputs.iter().flatten().copied().collect();
    let data = Dataset::with_names(
        DMatrix::from_row_slice(rec.targets.len(), dim, &flat),
        DVector::from_vec(rec.targets.clone()),
        rec.input_names.clone(),
        rec.target_name.clone(),
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    if data.checksum() != rec.checksum {
        return Err(Error::Format("training data checksum mismatch".into()));
    }

    let f = &file.fitted;
    let expected = ModelKind::infer(f.kernel.as_ref(), f.noise.is_some());
    if expected != file.kind {
        return Err(Error::Format(format!("kind {} does not match the stored kernel/noise", file.kind.name())));
    }
    let mut model = TrainedModel::from_hyperparameters(&data, f.kernel.as_ref(), f.noise.as_ref(), f.sigma_eps_sq, &file.opt)?;
    model.kind = file.kind;
    model.free_params = f.free_params.clone();
    model.train_log = file.train_log;
    Ok(model)
}
