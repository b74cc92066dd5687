use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::targets::TargetFunction;
use crate::engine::config::Param;
use crate::engine::dataset::Dataset;
use crate::error::{Error, Result};
use crate::noise::{NoiseDistribution, NoiseSpec, DEFAULT_MC_SAMPLES};
use crate::seed::{derive_seed, rng_from_seed, SEED_RULE};
use crate::zoo::{build_and_fit, ModelConfig};

const DATA_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const OPT_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    #[default]
    Equispaced,
    Uniform,
}

fn default_reps() -> usize {
    20
}
fn default_grid() -> usize {
    1000
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetFunction,
    pub n_train: usize,
    #[serde(default)]
    pub design: Design,
    pub sigma_u_sq: f64,
    pub sigma_eps_sq: f64,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default = "default_grid")]
    pub eval_grid_size: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Hold σ_ε² at its true value so only kernel hyperparameters are estimated.
    #[serde(default = "yes")]
    pub pin_sigma_eps_sq: bool,
    pub models: Vec<ModelConfig>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        if self.n_train < 2 {
            return Err(Error::Config("n_train must be at least 2".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.eval_grid_size < 2 {
            return Err(Error::Config("eval_grid_size must be at least 2".into()));
        }
        for (name, v) in [("sigma_u_sq", self.sigma_u_sq), ("sigma_eps_sq", self.sigma_eps_sq)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be nonnegative")));
            }
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        let mut labels: Vec<String> = self.models.iter().map(ModelConfig::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("model labels must be unique; set `label` to tell them apart".into()));
        }
        for i in 0..self.models.len() {
            self.model_for(i, 0).validate()?;
        }
        Ok(())
    }

    /// Model `i` as fitted in replication `rep`: noise prior filled in from the
    /// experiment when absent, per-replication seeds, optional pinned σ_ε².
    pub fn model_for(&self, i: usize, rep: usize) -> ModelConfig {
        let mut m = self.models[i].clone();
        let path = [rep as u64, i as u64];
        if m.model.wants_noise() {
            let seed = derive_seed(self.master_seed, &[NOISE_STREAM, path[0], path[1]]);
            let noise = m.noise.get_or_insert_with(|| NoiseSpec::isotropic(self.sigma_u_sq, DEFAULT_MC_SAMPLES, seed));
            noise.seed = seed;
        }
        m.opt.seed = derive_seed(self.master_seed, &[OPT_STREAM, path[0], path[1]]);
        if self.pin_sigma_eps_sq {
            m.opt.pinned.entry(Param::SigmaEpsSq).or_insert(self.sigma_eps_sq);
        }
        m
    }

    pub fn eval_grid(&self) -> Vec<f64> {
        linspace(self.target.domain(), self.eval_grid_size)
    }
}

pub fn linspace([a, b]: [f64; 2], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Replication data: nominal design `x`, observations `f(x + u) + ε`.
pub fn generate_data(cfg: &ExperimentConfig, replication: usize) -> Result<Dataset> {
    let mut rng = rng_from_seed(derive_seed(cfg.master_seed, &[DATA_STREAM, replication as u64]));
    let [a, b] = cfg.target.domain();
    let x: Vec<f64> = match cfg.design {
        Design::Equispaced => linspace([a, b], cfg.n_train),
        Design::Uniform => {
            let mut v: Vec<f64> = (0..cfg.n_train).map(|_| rng.random_range(a..=b)).collect();
            v.sort_by(f64::total_cmp);
            v
        }
    };
    let su = cfg.sigma_u_sq.sqrt();
    let se = cfg.sigma_eps_sq.sqrt();
    let y: Vec<f64> = x
        .iter()
        .map(|xi| {
            let u: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            cfg.target.value(xi + su * u) + se * e
        })
        .collect();
    Dataset::from_1d(&x, &y)
}

/// Outcome of one model in one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub replication: usize,
    pub metric: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Fitted hyperparameters by name (natural units).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hyperparameters: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub label: String,
    pub model: crate::zoo::ModelKind,
    pub runs: Vec<RunOutcome>,
    /// Mean over successful runs.
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub failures: usize,
}

impl ModelSummary {
    pub fn from_runs(label: String, model: crate::zoo::ModelKind, runs: Vec<RunOutcome>) -> Self {
        let ok: Vec<f64> = runs.iter().filter_map(|r| r.metric).collect();
        let failures = runs.len() - ok.len();
        let (mean, stderr) = mean_stderr(&ok);
        ModelSummary { label, model, runs, mean, stderr, failures }
    }
}

pub fn mean_stderr(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let se = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(se))
}

/// Predictive curves of replication 0, for plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub train_x: Vec<f64>,
    pub train_y: Vec<f64>,
    /// Per model: label, predictive mean, predictive standard deviation (NaN-free; empty on failure).
    pub models: Vec<(String, Vec<f64>, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub metric: String,
    pub seed_rule: String,
    pub master_seed: u64,
    pub replication_seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub models: Vec<ModelSummary>,
    pub curves: Option<Curves>,
}

impl BenchmarkReport {
    pub fn summary(&self, label: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.label == label)
    }
}

pub(crate) fn hyperparameters(model: &crate::engine::model::TrainedModel) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    if let Some(k) = &model.kernel {
        for p in Param::for_kernel(k) {
            out.push((p.name().to_string(), p.get(k, model.sigma_eps_sq)));
        }
    }
    out.push(("sigma_eps_sq".to_string(), model.sigma_eps_sq));
    out
}

struct RepResult {
    outcomes: Vec<RunOutcome>,
    curves: Vec<(Vec<f64>, Vec<f64>)>,
    data: Dataset,
}

fn run_replication(cfg: &ExperimentConfig, rep: usize, grid: &DMatrix<f64>, truth: &[f64], keep_curves: bool) -> Result<RepResult> {
    let data = generate_data(cfg, rep)?;
    let mut outcomes = Vec::with_capacity(cfg.models.len());
    let mut curves = Vec::new();
    for i in 0..cfg.models.len() {
        let mc = cfg.model_for(i, rep);
        let fitted = build_and_fit(&mc, &data).and_then(|m| m.predict_batch(grid).map(|p| (m, p)));
        match fitted {
            Ok((model, preds)) => {
                let mse = preds.iter().zip(truth).map(|(p, t)| (p.mean - t).powi(2)).sum::<f64>() / truth.len() as f64;
                if keep_curves {
                    curves.push((preds.iter().map(|p| p.mean).collect(), preds.iter().map(|p| p.variance.sqrt()).collect()));
                }
                outcomes.push(RunOutcome {
                    replication: rep,
                    metric: Some(mse),
                    error: None,
                    hyperparameters: hyperparameters(&model),
                    mc_samples: model.noise.as_ref().map(|n| n.mc_samples),
                });
            }
            Err(e) => {
                log::warn!("replication {rep}: model {} failed: {e}", mc.label());
                if keep_curves {
                    curves.push((Vec::new(), Vec::new()));
                }
                outcomes.push(RunOutcome { replication: rep, metric: None, error: Some(e.to_string()), hyperparameters: Vec::new(), mc_samples: None });
            }
        }
    }
    Ok(RepResult { outcomes, curves, data })
}

/// Fits every model on every replication and scores the predictive mean
/// against the true function on a dense grid (MSE).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let grid_x = cfg.eval_grid();
    let truth: Vec<f64> = grid_x.iter().map(|x| cfg.target.value(*x)).collect();
    let grid = DMatrix::from_column_slice(grid_x.len(), 1, &grid_x);
    let reps: Vec<RepResult> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep, &grid, &truth, rep == 0))
        .collect::<Result<_>>()?;

    let models = cfg
        .models
        .iter()
        .enumerate()
        .map(|(i, m)| ModelSummary::from_runs(m.label(), m.model, reps.iter().map(|r| r.outcomes[i].clone()).collect()))
        .collect();
    let first = &reps[0];
    let curves = Curves {
        grid: grid_x,
        truth,
        train_x: first.data.inputs.iter().copied().collect(),
        train_y: first.data.targets.iter().copied().collect(),
        models: cfg.models.iter().zip(&first.curves).map(|(m, (mu, sd))| (m.label(), mu.clone(), sd.clone())).collect(),
    };
    Ok(BenchmarkReport {
        metric: "mse".into(),
        seed_rule: SEED_RULE.into(),
        master_seed: cfg.master_seed,
        replication_seeds: (0..cfg.replications).map(|r| derive_seed(cfg.master_seed, &[DATA_STREAM, r as u64])).collect(),
        config: cfg.clone(),
        models,
        curves: Some(curves),
    })
}

/// The isotropic noise variance a model would use under this experiment.
pub fn effective_sigma_u_sq(cfg: &ExperimentConfig, i: usize) -> Option<f64> {
    match cfg.model_for(i, 0).noise?.distribution {
        NoiseDistribution::GaussianIsotropic { sigma_u_sq } => Some(sigma_u_sq),
        _ => None,
    }
}
