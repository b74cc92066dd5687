//! Synthetic benchmarks and tabular evaluation.

pub mod experiment;
pub mod tabular;
pub mod targets;

use std::fmt::Write as _;

pub use experiment::{generate_data, run_experiment, BenchmarkReport, Design, ExperimentConfig, ModelSummary};
pub use tabular::{read_table, run_tabular, synthetic_case_study, ColumnRoles, DeformationPair, SyntheticCase, Table, TabularReport};
pub use targets::{eval_target, total_deformation, TargetFunction};

/// `replication` then one metric column per model; failures are written as `NA`.
pub fn metric_table(report: &BenchmarkReport) -> String {
    let mut out = String::from("replication");
    for m in &report.models {
        let _ = write!(out, "\t{}", m.label);
    }
    out.push('\n');
    for rep in 0..report.config.replications {
        let _ = write!(out, "{rep}");
        for m in &report.models {
            match m.runs[rep].metric {
                Some(v) => {
                    let _ = write!(out, "\t{v:.17e}");
                }
                None => out.push_str("\tNA"),
            }
        }
        out.push('\n');
    }
    out
}

/// Grid, truth, and per-model mean and standard deviation for replication 0.
pub fn curve_table(report: &BenchmarkReport) -> String {
    let Some(c) = &report.curves else {
        return String::new();
    };
    let mut out = String::from("x\ttruth");
    for (label, _, _) in &c.models {
        let _ = write!(out, "\t{label}_mean\t{label}_sd");
    }
    out.push('\n');
    for (i, (x, t)) in c.grid.iter().zip(&c.truth).enumerate() {
        let _ = write!(out, "{x:.17e}\t{t:.17e}");
        for (_, mu, sd) in &c.models {
            match (mu.get(i), sd.get(i)) {
                (Some(m), Some(s)) => {
                    let _ = write!(out, "\t{m:.17e}\t{s:.17e}");
                }
                _ => out.push_str("\tNA\tNA"),
            }
        }
        out.push('\n');
    }
    out
}

/// Training points of replication 0.
pub fn training_table(report: &BenchmarkReport) -> String {
    let mut out = String::from("x\ty\n");
    if let Some(c) = &report.curves {
        for (x, y) in c.train_x.iter().zip(&c.train_y) {
            let _ = writeln!(out, "{x:.17e}\t{y:.17e}");
        }
    }
    out
}
