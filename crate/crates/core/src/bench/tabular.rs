use std::io::Read;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bench::experiment::{hyperparameters, mean_stderr};
use crate::bench::targets::total_deformation;
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::seed::{derive_seed, rng_from_seed};
use crate::zoo::{fit_per_output, ModelConfig, ModelKind};

/// Numeric table with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column `{name}` not found")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn matrix(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let idx: Vec<usize> = names.iter().map(|n| self.column_index(n)).collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(self.rows.len(), idx.len(), |i, j| self.rows[i][idx[j]]))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format!("{v:?}"))).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }
}

/// Reads comma-separated numbers with a header row. Blank lines are skipped.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("bad header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Data("missing header row".into()));
    }
    let mut seen = headers.clone();
    seen.sort();
    if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Data(format!("duplicate column `{}`", w[0])));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("row {}: {e}", i + 2)))?;
        if rec.len() != headers.len() {
            return Err(Error::Data(format!("row {} has {} fields, expected {}", i + 2, rec.len(), headers.len())));
        }
        let row = rec
            .iter()
            .zip(&headers)
            .map(|(cell, h)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Data(format!("row {}, column `{h}`: `{cell}` is not a finite number", i + 2))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationPair {
    pub name: String,
    pub dy: String,
    pub dz: String,
}

/// Which columns are inputs and which are modelled outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Derived totals `√(dy² + dz²)` from two output columns.
    #[serde(default)]
    pub deformation: Vec<DeformationPair>,
}

impl ColumnRoles {
    pub fn parse(text: &str) -> Result<Self> {
        let roles: ColumnRoles = toml::from_str(text).map_err(|e| Error::Config(format!("column roles: {e}")))?;
        roles.validate()?;
        Ok(roles)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() || self.outputs.is_empty() {
            return Err(Error::Config("column roles need at least one input and one output".into()));
        }
        let mut all: Vec<&String> = self.inputs.iter().chain(&self.outputs).collect();
        all.sort();
        if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("column `{}` listed twice", w[0])));
        }
        for d in &self.deformation {
            for c in [&d.dy, &d.dz] {
                if !self.outputs.contains(c) {
                    return Err(Error::Config(format!("deformation `{}` uses `{c}`, which is not an output", d.name)));
                }
            }
        }
        Ok(())
    }

    /// Checks that every role column exists in `table`.
    pub fn check(&self, table: &Table) -> Result<()> {
        for c in self.inputs.iter().chain(&self.outputs) {
            table.column_index(c)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputScore {
    pub name: String,
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hyperparameters: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularModelResult {
    pub label: String,
    pub model: ModelKind,
    pub outputs: Vec<OutputScore>,
    pub deformation: Vec<OutputScore>,
    /// Mean MAE over outputs that fitted.
    pub mean_mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularReport {
    pub metric: String,
    pub n_train: usize,
    pub n_test: usize,
    pub roles: ColumnRoles,
    pub models: Vec<TabularModelResult>,
    /// Test-set predictive means, `(model label, output name, values)`.
    #[serde(skip)]
    pub predictions: Vec<(String, String, Vec<f64>)>,
}

impl TabularReport {
    pub fn result(&self, label: &str) -> Option<&TabularModelResult> {
        self.models.iter().find(|m| m.label == label)
    }
}

fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64
}

/// Fits each model to each output column of `train` and scores MAE on `test`.
pub fn run_tabular(train: &Table, test: &Table, roles: &ColumnRoles, models: &[ModelConfig]) -> Result<TabularReport> {
    roles.validate()?;
    roles.check(train)?;
    roles.check(test)?;
    if models.is_empty() {
        return Err(Error::Config("at least one model is required".into()));
    }
    for m in models {
        m.validate()?;
    }
    let x_train = train.matrix(&roles.inputs)?;
    let x_test = test.matrix(&roles.inputs)?;
    let outputs: Vec<(String, DVector<f64>)> = roles
        .outputs
        .iter()
        .map(|o| Ok((o.clone(), DVector::from_vec(train.column(o)?))))
        .collect::<Result<_>>()?;
    let truth: Vec<Vec<f64>> = roles.outputs.iter().map(|o| test.column(o)).collect::<Result<_>>()?;

    let mut results = Vec::new();
    let mut predictions = Vec::new();
    for cfg in models {
        let fits = fit_per_output(cfg, &x_train, &roles.inputs, &outputs);
        let mut scores = Vec::new();
        let mut means: Vec<Option<Vec<f64>>> = Vec::new();
        for ((name, _), (fit, t)) in outputs.iter().zip(fits.into_iter().zip(&truth)) {
            match fit.and_then(|m| Ok((m.predict_batch(&x_test)?, m))) {
                Ok((p, m)) => {
                    let mu: Vec<f64> = p.iter().map(|q| q.mean).collect();
                    scores.push(OutputScore { name: name.clone(), mae: Some(mae(&mu, t)), error: None, hyperparameters: hyperparameters(&m) });
                    predictions.push((cfg.label(), name.clone(), mu.clone()));
                    means.push(Some(mu));
                }
                Err(e) => {
                    log::warn!("model {} failed on output {name}: {e}", cfg.label());
                    scores.push(OutputScore { name: name.clone(), mae: None, error: Some(e.to_string()), hyperparameters: Vec::new() });
                    means.push(None);
                }
            }
        }
        let deformation = roles
            .deformation
            .iter()
            .map(|d| {
                let iy = roles.outputs.iter().position(|o| *o == d.dy).expect("validated");
                let iz = roles.outputs.iter().position(|o| *o == d.dz).expect("validated");
                let actual: Vec<f64> = truth[iy].iter().zip(&truth[iz]).map(|(a, b)| total_deformation(*a, *b)).collect();
                match (&means[iy], &means[iz]) {
                    (Some(py), Some(pz)) => {
                        let pred: Vec<f64> = py.iter().zip(pz).map(|(a, b)| total_deformation(*a, *b)).collect();
                        OutputScore { name: d.name.clone(), mae: Some(mae(&pred, &actual)), error: None, hyperparameters: Vec::new() }
                    }
                    _ => OutputScore { name: d.name.clone(), mae: None, error: Some("component model failed".into()), hyperparameters: Vec::new() },
                }
            })
            .collect();
        let ok: Vec<f64> = scores.iter().filter_map(|s| s.mae).collect();
        results.push(TabularModelResult {
            label: cfg.label(),
            model: cfg.model,
            mean_mae: mean_stderr(&ok).0,
            outputs: scores,
            deformation,
        });
    }
    Ok(TabularReport {
        metric: "mae".into(),
        n_train: train.rows.len(),
        n_test: test.rows.len(),
        roles: roles.clone(),
        models: results,
        predictions,
    })
}

/// Synthetic stand-in for a tabular case study: linear trend plus a
/// nonsmooth residual drawn from a Gaussian process, observed at
/// noise-shifted inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCase {
    pub n_inputs: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Scale of the trend coefficients.
    pub trend_scale: f64,
    /// Multiplier on the residual draw.
    pub residual_scale: f64,
    /// Residual covariance, evaluated on `residual_input_scale · (x − 0.5)`.
    pub residual_kernel: KernelSpec,
    pub residual_input_scale: f64,
    pub sigma_u_sq: f64,
    pub sigma_eps_sq: f64,
    pub seed: u64,
}

impl Default for SyntheticCase {
    fn default() -> Self {
        SyntheticCase {
            n_inputs: 10,
            n_train: 100,
            n_test: 50,
            trend_scale: 1.0,
            residual_scale: 1.0,
            residual_kernel: KernelSpec::composite(KernelFamily::ArcCosine, 2, 1.0, 1.0, 0),
            // unit-variance coordinates for uniform inputs
            residual_input_scale: 12f64.sqrt(),
            sigma_u_sq: 0.005,
            sigma_eps_sq: 0.01,
            seed: 0,
        }
    }
}

/// Training table observed at `x + u` with noise `ε`; test table holds the
/// noise-free response at nominal inputs. Inputs are uniform on `[0, 1]^d`.
/// The residual is one joint draw over the training (shifted) and test
/// (nominal) locations.
pub fn synthetic_case_study(c: &SyntheticCase) -> Result<(Table, Table, ColumnRoles)> {
    if c.n_inputs == 0 {
        return Err(Error::Config("n_inputs must be positive".into()));
    }
    let d = c.n_inputs;
    let mut kernel = c.residual_kernel.clone();
    kernel.input_dim = d;
    kernel.validate()?;
    let mut rng = rng_from_seed(derive_seed(c.seed, &[0xCA5E]));
    let beta: Vec<f64> = (0..=d).map(|_| c.trend_scale * rng.sample::<f64, _>(StandardNormal)).collect();

    let n = c.n_train + c.n_test;
    let nominal = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
    let su = c.sigma_u_sq.sqrt();
    let observed = DMatrix::from_fn(n, d, |i, j| {
        let u: f64 = rng.sample(StandardNormal);
        if i < c.n_train { nominal[(i, j)] + su * u } else { nominal[(i, j)] }
    });
    let centred = observed.map(|v| c.residual_input_scale * (v - 0.5));
    let gram = kernel.gram(&centred)?.values;
    let l = crate::linalg::factorize(&gram)?.lower();
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let resid = (l * z) * c.residual_scale;
    let se = c.sigma_eps_sq.sqrt();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let trend = beta[0] + (0..d).map(|j| beta[j + 1] * observed[(i, j)]).sum::<f64>();
            let eps: f64 = rng.sample(StandardNormal);
            trend + resid[i] + if i < c.n_train { se * eps } else { 0.0 }
        })
        .collect();
    let inputs: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    let mut headers = inputs.clone();
    headers.push("y".into());
    let row = |i: usize| -> Vec<f64> {
        let mut r: Vec<f64> = (0..d).map(|j| nominal[(i, j)]).collect();
        r.push(y[i]);
        r
    };
    let train = Table { headers: headers.clone(), rows: (0..c.n_train).map(row).collect() };
    let test = Table { headers, rows: (c.n_train..n).map(row).collect() };
    Ok((train, test, ColumnRoles { inputs, outputs: vec!["y".into()], deformation: Vec::new() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_csv() {
        let t = read_table("a, b\n1,2\n\n3.5,-4e-1\n".as_bytes()).unwrap();
        assert_eq!(t.headers, vec!["a", "b"]);
        assert_eq!(t.rows, vec![vec![1.0, 2.0], vec![3.5, -0.4]]);
        assert!(read_table("a,b\n1,x\n".as_bytes()).is_err());
        assert!(read_table("a,b\n1\n".as_bytes()).is_err());
        assert!(read_table("a,a\n1,2\n".as_bytes()).is_err());
        assert!(read_table("a,b\n1,NaN\n".as_bytes()).is_err());
        assert_eq!(read_table("a,b\n".as_bytes()).unwrap().rows.len(), 0);
        let back = read_table(t.to_csv().as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn roles_parse_and_check() {
        let r = ColumnRoles::parse("inputs = [\"a\"]\noutputs = [\"dy\", \"dz\"]\n[[deformation]]\nname = \"t\"\ndy = \"dy\"\ndz = \"dz\"\n").unwrap();
        assert_eq!(r.deformation.len(), 1);
        assert!(ColumnRoles::parse("inputs = [\"a\"]\noutputs = [\"a\"]\n").is_err());
        assert!(ColumnRoles::parse("inputs = [\"a\"]\noutputs = [\"b\"]\n[[deformation]]\nname = \"t\"\ndy = \"b\"\ndz = \"c\"\n").is_err());
        let t = Table { headers: vec!["a".into(), "dy".into()], rows: vec![] };
        assert!(r.check(&t).is_err());
    }

    #[test]
    fn interpolating_model_on_train_set() {
        let t = Table {
            headers: vec!["x".into(), "y".into()],
            rows: (0..6).map(|i| vec![i as f64 * 0.4, (i as f64 * 0.4).cos()]).collect(),
        };
        let roles = ColumnRoles { inputs: vec!["x".into()], outputs: vec!["y".into()], deformation: vec![] };
        let mut cfg = ModelConfig::new(ModelKind::ShallowGp, Some(KernelSpec::rbf(0.5, 1.0, 0)), None);
        cfg.opt.method = crate::engine::config::OptMethod::Grid;
        cfg.opt.pinned.insert(crate::engine::config::Param::SigmaEpsSq, 0.0);
        let r = run_tabular(&t, &t, &roles, &[cfg]).unwrap();
        assert!(r.models[0].mean_mae.unwrap() < 1e-6);
    }

    #[test]
    fn constant_output_linear() {
        let t = Table { headers: vec!["x".into(), "y".into()], rows: (0..5).map(|i| vec![i as f64, 3.0]).collect() };
        let roles = ColumnRoles { inputs: vec!["x".into()], outputs: vec!["y".into()], deformation: vec![] };
        let r = run_tabular(&t, &t, &roles, &[ModelConfig::new(ModelKind::Linear, None, None)]).unwrap();
        assert!(r.models[0].mean_mae.unwrap() < 1e-12);
    }

    #[test]
    fn deformation_scored() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 3.0 * i as f64, 4.0 * i as f64]).collect();
        let t = Table { headers: vec!["x".into(), "dy".into(), "dz".into()], rows };
        let roles = ColumnRoles::parse("inputs = [\"x\"]\noutputs = [\"dy\", \"dz\"]\n[[deformation]]\nname = \"total\"\ndy = \"dy\"\ndz = \"dz\"\n").unwrap();
        let r = run_tabular(&t, &t, &roles, &[ModelConfig::new(ModelKind::Linear, None, None)]).unwrap();
        assert!(r.models[0].deformation[0].mae.unwrap() < 1e-10);
    }

    #[test]
    fn synthetic_shapes() {
        let c = SyntheticCase { n_train: 12, n_test: 5, ..Default::default() };
        let (tr, te, roles) = synthetic_case_study(&c).unwrap();
        assert_eq!((tr.rows.len(), te.rows.len(), roles.inputs.len()), (12, 5, 10));
        assert_eq!(synthetic_case_study(&c).unwrap().0, tr);
    }
}
