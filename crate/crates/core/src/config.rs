//! One TOML document for every batch command.
//!
//! ```toml
//! [model]          # fit: a ModelConfig
//! [columns]        # fit: input/output column roles (default: last column is the output)
//! [experiment]     # bench: synthetic 1-D protocol
//! [tabular]        # bench: train/test tables or a synthetic case
//! [eigen]          # eigen: Gram-matrix spectra
//! ```
//!
//! Unknown keys are rejected at every level.

use serde::{Deserialize, Serialize};

use crate::bench::{ColumnRoles, ExperimentConfig, SyntheticCase};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::spectral::SpectrumConfig;
use crate::zoo::ModelConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<ColumnRoles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigen: Option<SpectrumConfig>,
}

/// Either `train` + `test` + `columns`, or `synthetic`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularConfig {
    /// Paths are resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<ColumnRoles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticCase>,
    pub models: Vec<ModelConfig>,
}

impl TabularConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.train, &self.test, &self.columns, &self.synthetic) {
            (Some(_), Some(_), Some(c), None) => c.validate()?,
            (None, None, None, Some(_)) => {}
            _ => return Err(Error::Config("[tabular] needs either train, test and columns, or synthetic".into())),
        }
        if self.models.is_empty() {
            return Err(Error::Config("[tabular] needs at least one model".into()));
        }
        let mut labels: Vec<String> = self.models.iter().map(ModelConfig::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("tabular model labels must be unique".into()));
        }
        self.models.iter().try_for_each(ModelConfig::validate)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = &self.model {
            m.validate()?;
        }
        if let Some(c) = &self.columns {
            c.validate()?;
        }
        if let Some(e) = &self.experiment {
            e.validate()?;
        }
        if let Some(t) = &self.tabular {
            t.validate()?;
        }
        if let Some(s) = &self.eigen {
            s.validate()?;
        }
        Ok(())
    }

    /// Replaces every seed in the document with one derived from `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(m) = &mut self.model {
            reseed_model(m, seed, 0);
        }
        if let Some(e) = &mut self.experiment {
            e.master_seed = seed;
        }
        if let Some(t) = &mut self.tabular {
            if let Some(s) = &mut t.synthetic {
                s.seed = seed;
            }
            for (i, m) in t.models.iter_mut().enumerate() {
                reseed_model(m, seed, i as u64);
            }
        }
        if let Some(s) = &mut self.eigen {
            s.seed = seed;
        }
    }
}

fn reseed_model(m: &mut ModelConfig, seed: u64, index: u64) {
    m.opt.seed = derive_seed(seed, &[index, 0]);
    if let Some(n) = &mut m.noise {
        n.seed = derive_seed(seed, &[index, 1]);
    }
}
