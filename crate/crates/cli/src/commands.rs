use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use nngpiu::bench::{self, read_table, run_experiment, run_tabular, synthetic_case_study, ColumnRoles, Table};
use nngpiu::config::RunConfig;
use nngpiu::spectral::{run_spectra, spectrum_table};
use nngpiu::zoo::{deserialize, fit_per_output, serialize};
use nngpiu::Error;

use crate::manifest::{collect_seeds, input_file, now_ms, sha256_hex, InputFile, OutputFile, RunManifest, MANIFEST_FORMAT, MANIFEST_NAME};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_IO: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError { code: EXIT_DATA, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_CONFIG,
            Error::Data(_) | Error::Dimension { .. } | Error::Input(_) | Error::Format(_) => EXIT_DATA,
            Error::Numeric(_) | Error::Conditioning { .. } | Error::Training(_) => EXIT_NUMERIC,
            Error::Io(_) => EXIT_IO,
        };
        CliError { code, message: e.to_string() }
    }
}

type Staged = Vec<(String, Vec<u8>)>;

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

fn check_input(record: &InputFile) -> Result<Vec<u8>, CliError> {
    let path = Path::new(&record.path);
    let bytes = read_bytes(path)?;
    if sha256_hex(&bytes) != record.sha256 {
        return Err(CliError::data(format!("{} ({}) changed since the recorded run", record.path, record.role)));
    }
    Ok(bytes)
}

fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

/// Parses the config, applies the seed override and makes table paths absolute.
fn load_config(path: &Path, seed: Option<u64>) -> Result<(RunConfig, InputFile), CliError> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::config(format!("{} is not UTF-8", path.display())))?;
    let mut cfg = RunConfig::parse(text)?;
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    let abs = absolute(path);
    let dir = abs.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(t) = &mut cfg.tabular {
        for p in [&mut t.train, &mut t.test].into_iter().flatten() {
            *p = absolute(&dir.join(&*p)).display().to_string();
        }
    }
    Ok((cfg, input_file("config", &abs, &bytes)))
}

struct Run<'a> {
    command: &'a str,
    out: &'a Path,
    inputs: Vec<InputFile>,
    config: Option<RunConfig>,
    seed_override: Option<u64>,
    threads: Option<usize>,
    started: u64,
}

/// Writes staged files and the manifest; nothing is created before every output is ready.
fn finish(run: Run<'_>, staged: Staged) -> Result<(), CliError> {
    let out = run.out;
    if out.exists() {
        let mut entries = fs::read_dir(out).map_err(|e| CliError::io(out, e))?;
        if entries.next().is_some() {
            return Err(CliError { code: EXIT_IO, message: format!("output directory {} is not empty", out.display()) });
        }
    }
    let created = !out.exists();
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut outputs = Vec::new();
    let mut written = Vec::new();
    let result = (|| {
        for (name, bytes) in &staged {
            let path = out.join(name);
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
            outputs.push(OutputFile { path: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        }
        let manifest = RunManifest {
            format: MANIFEST_FORMAT.into(),
            command: run.command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            inputs: run.inputs.clone(),
            resolved_config_sha256: run.config.as_ref().map(config_hash),
            seeds: run.config.as_ref().map(collect_seeds).unwrap_or_default(),
            resolved_config: run.config.clone(),
            seed_override: run.seed_override,
            threads: run.threads,
            started_unix_ms: run.started,
            finished_unix_ms: now_ms(),
            outputs: outputs.clone(),
        };
        let path = out.join(MANIFEST_NAME);
        let text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(())
    })();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        if created {
            let _ = fs::remove_dir(out);
        }
    }
    result
}

fn safe_name(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn default_roles(table: &Table) -> Result<ColumnRoles, CliError> {
    if table.headers.len() < 2 {
        return Err(CliError::data("need at least one input column and one output column"));
    }
    let (last, rest) = table.headers.split_last().expect("nonempty");
    Ok(ColumnRoles { inputs: rest.to_vec(), outputs: vec![last.clone()], deformation: Vec::new() })
}

fn fit_outputs(cfg: &RunConfig, data: &[u8]) -> Result<Staged, CliError> {
    let model = cfg.model.as_ref().ok_or_else(|| CliError::config("fit needs a [model] section"))?;
    let table = read_table(data)?;
    let roles = match &cfg.columns {
        Some(r) => r.clone(),
        None => default_roles(&table)?,
    };
    roles.check(&table)?;
    if table.rows.is_empty() {
        return Err(CliError::data("training table has no rows"));
    }
    let x = table.matrix(&roles.inputs)?;
    let outputs: Vec<(String, DVector<f64>)> = roles
        .outputs
        .iter()
        .map(|o| Ok((o.clone(), DVector::from_vec(table.column(o)?))))
        .collect::<Result<_, Error>>()?;
    let single = outputs.len() == 1;
    let mut staged = Staged::new();
    for ((name, _), fitted) in outputs.iter().zip(fit_per_output(model, &x, &roles.inputs, &outputs)) {
        let text = serialize(&fitted?)?;
        let file = if single { "model.json".to_string() } else { format!("model_{}.json", safe_name(name)) };
        staged.push((file, text.into_bytes()));
    }
    Ok(staged)
}

pub fn fit(config: &Path, data: &Path, out: &Path, seed: Option<u64>, threads: Option<usize>) -> Result<(), CliError> {
    let started = now_ms();
    let (cfg, cfg_in) = load_config(config, seed)?;
    let bytes = read_bytes(data)?;
    let staged = fit_outputs(&cfg, &bytes)?;
    let inputs = vec![cfg_in, input_file("data", &absolute(data), &bytes)];
    finish(Run { command: "fit", out, inputs, config: Some(cfg), seed_override: seed, threads, started }, staged)
}

fn predict_outputs(model_text: &[u8], data: &[u8]) -> Result<Staged, CliError> {
    let text = std::str::from_utf8(model_text).map_err(|_| CliError::data("model file is not UTF-8"))?;
    let model = deserialize(text)?;
    let mut csv = String::from("mean,variance\n");
    if !data.iter().all(u8::is_ascii_whitespace) {
        let table = read_table(data)?;
        let x = table.matrix(&model.data.input_names)?;
        for p in model.predict_batch(&x)? {
            let _ = writeln!(csv, "{:?},{:?}", p.mean, p.variance);
        }
    }
    Ok(vec![("predictions.csv".into(), csv.into_bytes())])
}

pub fn predict(model: &Path, data: &Path, out: &Path, threads: Option<usize>) -> Result<(), CliError> {
    let started = now_ms();
    let model_bytes = read_bytes(model)?;
    let data_bytes = read_bytes(data)?;
    let staged = predict_outputs(&model_bytes, &data_bytes)?;
    let inputs = vec![input_file("model", &absolute(model), &model_bytes), input_file("data", &absolute(data), &data_bytes)];
    finish(Run { command: "predict", out, inputs, config: None, seed_override: None, threads, started }, staged)
}

fn summary_table(report: &bench::BenchmarkReport) -> String {
    let mut out = String::from("model\tkind\tmean\tstderr\tfailures\n");
    for m in &report.models {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_else(|| "NA".into());
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", m.label, m.model.name(), f(m.mean), f(m.stderr), m.failures);
    }
    out
}

fn tabular_tables(report: &bench::TabularReport) -> (String, String) {
    let mut mae = String::from("model\toutput\tmae\n");
    let f = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_else(|| "NA".into());
    for m in &report.models {
        for s in m.outputs.iter().chain(&m.deformation) {
            let _ = writeln!(mae, "{}\t{}\t{}", m.label, s.name, f(s.mae));
        }
        let _ = writeln!(mae, "{}\tmean\t{}", m.label, f(m.mean_mae));
    }
    let headers: Vec<String> = report.predictions.iter().map(|(l, o, _)| format!("{l}:{o}")).collect();
    let table = Table {
        headers,
        rows: (0..report.n_test).map(|i| report.predictions.iter().map(|(_, _, v)| v[i]).collect()).collect(),
    };
    (mae, table.to_csv())
}

fn bench_outputs(cfg: &RunConfig, inputs: &mut Vec<InputFile>, recorded: Option<&[InputFile]>) -> Result<Staged, CliError> {
    if cfg.experiment.is_none() && cfg.tabular.is_none() {
        return Err(CliError::config("bench needs an [experiment] or [tabular] section"));
    }
    let mut staged = Staged::new();
    if let Some(exp) = &cfg.experiment {
        let report = run_experiment(exp)?;
        staged.push(("report.json".into(), serde_json::to_vec_pretty(&report).expect("report serializes")));
        staged.push(("summary.tsv".into(), summary_table(&report).into_bytes()));
        staged.push(("metrics.tsv".into(), bench::metric_table(&report).into_bytes()));
        staged.push(("curves.tsv".into(), bench::curve_table(&report).into_bytes()));
        staged.push(("training.tsv".into(), bench::training_table(&report).into_bytes()));
    }
    if let Some(t) = &cfg.tabular {
        let (train, test, roles) = match (&t.synthetic, &t.train, &t.test, &t.columns) {
            (Some(s), _, _, _) => {
                let (train, test, roles) = synthetic_case_study(s)?;
                staged.push(("train.csv".into(), train.to_csv().into_bytes()));
                staged.push(("test.csv".into(), test.to_csv().into_bytes()));
                (train, test, roles)
            }
            (None, Some(train), Some(test), Some(roles)) => {
                let mut load = |role: &str, path: &str| -> Result<Table, CliError> {
                    let bytes = match recorded.and_then(|r| r.iter().find(|i| i.role == role)) {
                        Some(rec) => check_input(rec)?,
                        None => read_bytes(Path::new(path))?,
                    };
                    inputs.push(input_file(role, Path::new(path), &bytes));
                    Ok(read_table(bytes.as_slice())?)
                };
                (load("train", train)?, load("test", test)?, roles.clone())
            }
            _ => return Err(CliError::config("[tabular] needs either train, test and columns, or synthetic")),
        };
        let report = run_tabular(&train, &test, &roles, &t.models)?;
        let (mae, preds) = tabular_tables(&report);
        staged.push(("tabular_report.json".into(), serde_json::to_vec_pretty(&report).expect("report serializes")));
        staged.push(("tabular_mae.tsv".into(), mae.into_bytes()));
        staged.push(("tabular_predictions.csv".into(), preds.into_bytes()));
    }
    Ok(staged)
}

pub fn bench(config: &Path, out: &Path, seed: Option<u64>, threads: Option<usize>) -> Result<(), CliError> {
    let started = now_ms();
    let (cfg, cfg_in) = load_config(config, seed)?;
    let mut inputs = vec![cfg_in];
    let staged = bench_outputs(&cfg, &mut inputs, None)?;
    finish(Run { command: "bench", out, inputs, config: Some(cfg), seed_override: seed, threads, started }, staged)
}

fn eigen_outputs(cfg: &RunConfig) -> Result<Staged, CliError> {
    let spec = cfg.eigen.as_ref().ok_or_else(|| CliError::config("eigen needs an [eigen] section"))?;
    let reports = run_spectra(spec)?;
    let mut staged = Staged::new();
    let mut fits = String::from("kernel\tslope\tintercept\tr_squared\tloglog_slope\tloglog_r_squared\n");
    for r in &reports {
        let (d, l) = (&r.decay_fit, &r.loglog_fit);
        let _ = writeln!(fits, "{}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}", r.kernel_label, d.slope, d.intercept, d.r_squared, l.slope, l.r_squared);
        staged.push((format!("spectrum_{}.tsv", safe_name(&r.kernel_label)), spectrum_table(r).into_bytes()));
    }
    staged.push(("decay_fits.tsv".into(), fits.into_bytes()));
    staged.push(("spectra.json".into(), serde_json::to_vec_pretty(&reports).expect("report serializes")));
    Ok(staged)
}

pub fn eigen(config: &Path, out: &Path, seed: Option<u64>, threads: Option<usize>) -> Result<(), CliError> {
    let started = now_ms();
    let (cfg, cfg_in) = load_config(config, seed)?;
    let staged = eigen_outputs(&cfg)?;
    finish(Run { command: "eigen", out, inputs: vec![cfg_in], config: Some(cfg), seed_override: seed, threads, started }, staged)
}

/// Repeats a recorded command from its resolved configuration, after checking
/// that every recorded input file is unchanged.
pub fn rerun(manifest_path: &Path, out: &Path, threads: Option<usize>) -> Result<(), CliError> {
    let started = now_ms();
    let bytes = read_bytes(manifest_path)?;
    let m: RunManifest = serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("manifest: {e}")))?;
    if m.format != MANIFEST_FORMAT {
        return Err(CliError::config(format!("{} is not a run manifest", manifest_path.display())));
    }
    let config = || -> Result<RunConfig, CliError> {
        let cfg = m.resolved_config.clone().ok_or_else(|| CliError::config("manifest has no resolved configuration"))?;
        if m.resolved_config_sha256.as_deref() != Some(config_hash(&cfg).as_str()) {
            return Err(CliError::config("resolved configuration does not match its recorded hash"));
        }
        cfg.validate()?;
        Ok(cfg)
    };
    let need = |role: &str| m.input(role).ok_or_else(|| CliError::config(format!("manifest lists no {role} input")));
    let run = |inputs, config| Run { command: &m.command, out, inputs, config, seed_override: m.seed_override, threads, started };
    match m.command.as_str() {
        "fit" => {
            let cfg = config()?;
            let data = check_input(need("data")?)?;
            let staged = fit_outputs(&cfg, &data)?;
            finish(run(m.inputs.clone(), Some(cfg)), staged)
        }
        "predict" => {
            let model = check_input(need("model")?)?;
            let data = check_input(need("data")?)?;
            let staged = predict_outputs(&model, &data)?;
            finish(run(m.inputs.clone(), None), staged)
        }
        "bench" => {
            let cfg = config()?;
            let mut inputs: Vec<InputFile> = m.inputs.iter().filter(|i| i.role == "config").cloned().collect();
            let staged = bench_outputs(&cfg, &mut inputs, Some(&m.inputs))?;
            finish(run(inputs, Some(cfg)), staged)
        }
        "eigen" => {
            let cfg = config()?;
            let staged = eigen_outputs(&cfg)?;
            finish(run(m.inputs.clone(), Some(cfg)), staged)
        }
        other => Err(CliError::config(format!("unknown command `{other}` in manifest"))),
    }
}
