use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nngpiu::config::RunConfig;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "nngpiu-run";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFile {
    /// `config`, `data`, `model`, `train` or `test`.
    pub role: String,
    /// Absolute path at the time of the run.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to repeat a command: its inputs by path and hash, the
/// resolved configuration, and the seeds it used.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub tool_version: String,
    pub inputs: Vec<InputFile>,
    /// Configuration after the `--seed` override, as used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_config: Option<RunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_config_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_override: Option<u64>,
    pub seeds: Vec<(String, u64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn input_file(role: &str, path: &Path, bytes: &[u8]) -> InputFile {
    InputFile { role: role.to_string(), path: path.display().to_string(), sha256: sha256_hex(bytes) }
}

impl RunManifest {
    pub fn input(&self, role: &str) -> Option<&InputFile> {
        self.inputs.iter().find(|i| i.role == role)
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Seeds named by where they act, for the manifest.
pub fn collect_seeds(cfg: &RunConfig) -> Vec<(String, u64)> {
    let mut out = Vec::new();
    let mut model = |prefix: &str, m: &nngpiu::zoo::ModelConfig| {
        out.push((format!("{prefix}{}.opt", m.label()), m.opt.seed));
        if let Some(n) = &m.noise {
            out.push((format!("{prefix}{}.noise", m.label()), n.seed));
        }
    };
    if let Some(m) = &cfg.model {
        model("model.", m);
    }
    if let Some(t) = &cfg.tabular {
        for m in &t.models {
            model("tabular.", m);
        }
    }
    if let Some(t) = &cfg.tabular {
        if let Some(s) = &t.synthetic {
            out.push(("tabular.synthetic".into(), s.seed));
        }
    }
    if let Some(e) = &cfg.experiment {
        out.push(("experiment.master_seed".into(), e.master_seed));
    }
    if let Some(s) = &cfg.eigen {
        out.push(("eigen.seed".into(), s.seed));
    }
    out
}
