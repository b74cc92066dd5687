use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Training inputs (one row per observation) and a single output column.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub input_names: Vec<String>,
    pub target_name: String,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        let names = (0..inputs.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(inputs, targets, names, "y".to_string())
    }

    pub fn with_names(
        inputs: DMatrix<f64>,
        targets: DVector<f64>,
        input_names: Vec<String>,
        target_name: String,
    ) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::Data(format!(
                "{} input rows but {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        if inputs.ncols() == 0 {
            return Err(Error::Data("dataset needs at least one input column".into()));
        }
        if input_names.len() != inputs.ncols() {
            return Err(Error::Data("one name per input column required".into()));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Dataset { inputs, targets, input_names, target_name })
    }

    /// One-dimensional dataset from paired slices.
    pub fn from_1d(x: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(x.len(), 1, x), DVector::from_column_slice(y))
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    /// SHA-256 over the shape, names and little-endian values (row-major inputs, then targets).
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        for name in self.input_names.iter().chain(std::iter::once(&self.target_name)) {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
        }
        for i in 0..self.n() {
            for j in 0..self.dim() {
                h.update(self.inputs[(i, j)].to_le_bytes());
            }
        }
        for v in self.targets.iter() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardize {
    #[default]
    None,
    Inputs,
    InputsAndOutput,
}

/// Affine maps into the units the model is fitted in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_shift: f64,
    pub output_scale: f64,
}

impl Standardization {
    pub fn fit(data: &Dataset, mode: Standardize) -> Option<Self> {
        if mode == Standardize::None {
            return None;
        }
        let n = data.n() as f64;
        let mut input_shift = Vec::with_capacity(data.dim());
        let mut input_scale = Vec::with_capacity(data.dim());
        for col in data.inputs.column_iter() {
            let (mean, sd) = mean_sd(col.iter().copied(), n);
            input_shift.push(mean);
            input_scale.push(sd);
        }
        let (output_shift, output_scale) = if mode == Standardize::InputsAndOutput {
            mean_sd(data.targets.iter().copied(), n)
        } else {
            (0.0, 1.0)
        };
        Some(Standardization { input_shift, input_scale, output_shift, output_scale })
    }

    pub fn input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_shift.iter().zip(&self.input_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inputs(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.input_shift[j]) / self.input_scale[j])
    }

    pub fn output(&self, y: f64) -> f64 {
        (y - self.output_shift) / self.output_scale
    }

    pub fn mean_back(&self, v: f64) -> f64 {
        v * self.output_scale + self.output_shift
    }

    pub fn var_back(&self, v: f64) -> f64 {
        v * self.output_scale * self.output_scale
    }
}

/// Mean and population standard deviation; a constant column gets scale 1.
fn mean_sd(values: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
}
