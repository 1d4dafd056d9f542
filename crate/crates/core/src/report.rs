//! On-disk result artifacts and the method comparison table.
//!
//! A `run` writes, under its output directory:
//!
//! - `config_resolved.toml` — the resolved configuration, byte-stable;
//! - `rounds_<entity>.csv`  — per-round accuracies, one file per entity;
//! - `summary.csv`          — key/value rows with every final metric;
//! - `pca.csv`              — optional activation PCA export
//!   (`label,c1,c2,...` per example);
//! - `timing.txt`           — wall-clock seconds (the only
//!   non-reproducible artifact, kept separate on purpose).
//!
//! Floats are printed with six decimals, which makes byte-level comparison
//! of two runs meaningful.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::federated::ExperimentResult;
use crate::metrics::PcaResult;
use crate::nn::NUM_CLASSES;

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Human name of a strategy configuration, mirroring the usual shorthand:
/// same strategy everywhere collapses to one token (fine-tuning reads
/// "FCL-FT"), mixed setups read "client1-strategy/generalized-strategy",
/// and exemplar replay appends " + ex".
pub fn method_label(cfg: &ExperimentConfig) -> String {
    let c1 = cfg.strategies.client1.as_str();
    let g = cfg.strategies.generalized.as_str();
    let pretty = |s: &str| match s {
        "FLwF2T" => "FLwF-2T".to_string(),
        other => other.to_string(),
    };
    let mut label = if c1 == g {
        if c1 == "FT" {
            "FCL-FT".to_string()
        } else {
            pretty(c1)
        }
    } else {
        format!("{}/{}", pretty(c1), pretty(g))
    };
    if cfg.use_exemplars {
        label.push_str(" + ex");
    }
    label
}

fn rounds_csv(result: &ExperimentResult, client_idx: usize) -> String {
    let tasks = result.records.first().map_or(0, |r| {
        r.clients[client_idx]
            .per_task
            .capacity()
            .max(result.records.iter().map(|rr| rr.clients[client_idx].per_task.len()).max().unwrap_or(0))
    });
    let mut out = String::from("round,whole,personal");
    for t in 1..=tasks {
        let _ = write!(out, ",task{t}");
    }
    for c in 0..NUM_CLASSES {
        let _ = write!(out, ",class{c}");
    }
    out.push('\n');
    for record in &result.records {
        let c = &record.clients[client_idx];
        let _ = write!(out, "{},{},{}", record.round, fmt(c.whole), fmt(c.personal));
        for t in 1..=tasks {
            match c.per_task.iter().find(|(d, _)| *d == t) {
                Some((_, a)) => {
                    let _ = write!(out, ",{}", fmt(*a));
                }
                None => out.push(','),
            }
        }
        for v in c.per_class {
            let _ = write!(out, ",{}", fmt(v));
        }
        out.push('\n');
    }
    out
}

fn server_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("round,whole");
    for c in 0..NUM_CLASSES {
        let _ = write!(out, ",class{c}");
    }
    out.push('\n');
    for record in &result.records {
        let _ = write!(out, "{},{}", record.round, fmt(record.server_whole));
        for v in record.server_per_class {
            let _ = write!(out, ",{}", fmt(v));
        }
        out.push('\n');
    }
    out
}

/// The key/value summary rows, including everything `compare` needs.
pub fn summary_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("key,value\n");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k},{v}");
    };
    kv("method", method_label(&result.config));
    kv("dataset", result.config.dataset.clone());
    kv("master_seed", result.config.master_seed.to_string());
    kv("rounds", result.config.rounds.to_string());
    kv("pretrain_accuracy", fmt(result.pretrain_accuracy));
    for (label, v) in &result.report.general {
        kv(&format!("a_gen_{label}"), fmt(*v));
    }
    for (label, v) in &result.report.personal {
        kv(&format!("a_per_{label}"), fmt(*v));
    }
    for (label, t, v) in &result.report.avg_acc_at_task {
        kv(&format!("a_task{t}_{label}"), fmt(*v));
    }
    for (label, t, d, v) in &result.report.forgetting {
        kv(&format!("f_{t}_{d}_{label}"), fmt(*v));
    }
    for (label, t, v) in &result.report.avg_forgetting {
        kv(&format!("avg_f_{t}_{label}"), fmt(*v));
    }
    out
}

/// PCA export: one `label,c1,c2,...` row per example.
pub fn pca_csv(pca: &PcaResult) -> String {
    let k = pca.components.len();
    let mut out = String::from("label");
    for i in 1..=k {
        let _ = write!(out, ",c{i}");
    }
    out.push('\n');
    for (label, coords) in pca.labels.iter().zip(&pca.coords) {
        let _ = write!(out, "{label}");
        for v in coords {
            let _ = write!(out, ",{}", fmt(*v));
        }
        out.push('\n');
    }
    out
}

/// Write every artifact of a finished run. `pca` is included when the run
/// requested the export.
pub fn write_run_artifacts(
    out_dir: &Path,
    result: &ExperimentResult,
    pca: Option<&PcaResult>,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join("config_resolved.toml"),
        result.config.to_toml()?,
    )?;
    for (idx, label) in result.client_labels.iter().enumerate() {
        fs::write(
            out_dir.join(format!("rounds_{label}.csv")),
            rounds_csv(result, idx),
        )?;
    }
    if !result.records.is_empty() {
        fs::write(out_dir.join("rounds_server.csv"), server_csv(result))?;
    }
    fs::write(out_dir.join("summary.csv"), summary_csv(result))?;
    if let Some(p) = pca {
        fs::write(out_dir.join("pca.csv"), pca_csv(p))?;
    }
    fs::write(
        out_dir.join("timing.txt"),
        format!("wall_time_secs {:.3}\n", result.wall_time_secs),
    )?;
    Ok(())
}

/// Read a run's summary back into key/value form.
pub fn read_summary(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join("summary.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::Ingestion {
        file: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once(',').ok_or_else(|| Error::Ingestion {
            file: path.display().to_string(),
            line: i + 1,
            message: format!("not a key,value row: {line:?}"),
        })?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

/// Columns shown by the comparison table, pulled from each run's summary.
const COMPARE_COLUMNS: [(&str, &str); 6] = [
    ("A_gen^1", "a_gen_client1"),
    ("A_gen^g", "a_gen_generalized"),
    ("A_gen^srv", "a_gen_server"),
    ("A_per^1", "a_per_client1"),
    ("A_2^1", "a_task2_client1"),
    ("F_2^1", "avg_f_2_client1"),
];

/// Side-by-side table of the headline metrics of several result
/// directories. Missing metrics render as "-".
pub fn comparison_table(dirs: &[&Path]) -> Result<String> {
    if dirs.is_empty() {
        return Err(Error::Config("compare needs at least one result directory".into()));
    }
    let mut rows = Vec::new();
    for dir in dirs {
        let summary = read_summary(dir)?;
        let method = summary
            .get("method")
            .cloned()
            .unwrap_or_else(|| dir.display().to_string());
        let values: Vec<String> = COMPARE_COLUMNS
            .iter()
            .map(|(_, key)| summary.get(*key).cloned().unwrap_or_else(|| "-".to_string()))
            .collect();
        rows.push((method, values));
    }

    let mut widths = vec![rows.iter().map(|(m, _)| m.len()).max().unwrap().max(6)];
    for (i, (header, _)) in COMPARE_COLUMNS.iter().enumerate() {
        let w = rows
            .iter()
            .map(|(_, v)| v[i].len())
            .max()
            .unwrap()
            .max(header.len());
        widths.push(w);
    }

    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "Method", width = widths[0]);
    for (i, (header, _)) in COMPARE_COLUMNS.iter().enumerate() {
        let _ = write!(out, "  {:>width$}", header, width = widths[i + 1]);
    }
    out.push('\n');
    for (method, values) in &rows {
        let _ = write!(out, "{:<width$}", method, width = widths[0]);
        for (i, v) in values.iter().enumerate() {
            let _ = write!(out, "  {:>width$}", v, width = widths[i + 1]);
        }
        out.push('\n');
    }
    Ok(out)
}
