//! Run directory layout and report formatting.
//!
//! ```text
//! <dir>/config.txt          config echo, parseable by `load_config`
//! <dir>/report.json         aggregate + per-repeat reports
//! <dir>/report.csv          one line per repeat, then mean and std
//! <dir>/report.txt          aligned table, attributes then malignancy
//! <dir>/timing.json         wall-clock timings (not reproducible)
//! <dir>/manifest.json       files written, relative to <dir>
//! <dir>/repeat_<i>/seeds.csv
//! <dir>/repeat_<i>/status.csv
//! <dir>/repeat_<i>/acquisition_st<n>.csv
//! <dir>/repeat_<i>/checkpoints/st<n>/{manifest.json,weights.bin}
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::acquisition::write_trace;
use crate::config::ExperimentConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{AblationResult, MetricReport, align};
use crate::predictor::save_checkpoint;
use crate::trainer::{AggregateReport, RunOutcome, Timing};

pub const MANIFEST_FORMAT: &str = "annoexp-run/1";

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    format: &'a str,
    command: &'a str,
    files: Vec<String>,
}

/// Collects written paths for the manifest.
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let json = serde_json::to_string_pretty(value)
            .map_err(|e| Error::InvalidArgument(format!("serialising {rel}: {e}")))?;
        self.write(rel, json + "\n")
    }

    /// Records a file produced by another writer.
    pub fn track(&mut self, rel: &str) {
        self.files.push(rel.to_string());
    }

    pub fn finish(mut self, command: &str) -> Result<PathBuf> {
        self.files.sort();
        let manifest = Manifest { format: MANIFEST_FORMAT, command, files: self.files.clone() };
        self.write_json("manifest.json", &manifest)?;
        Ok(self.root)
    }
}

fn table_header(names: &[String]) -> Vec<String> {
    let mut h = vec!["run".to_string()];
    h.extend(names.iter().cloned());
    h.push("malignancy".into());
    h
}

/// Single-evaluation table: attributes (±1 rule) then malignancy, plus
/// both k-correct distributions.
pub fn metric_text(m: &MetricReport) -> String {
    let mut row = vec!["test".to_string()];
    row.extend(m.per_attribute_accuracy.iter().map(|a| format!("{a:.2}")));
    row.push(format!("{:.2}", m.malignancy_accuracy));
    let mut out = align(&[table_header(&m.attribute_names), row]);
    let _ = writeln!(out, "\nsamples: {}", m.n_samples);
    out.push_str(&k_correct_text(&m.k_correct_probs, &m.k_correct_empirical));
    out
}

fn k_correct_text(model: &[f64], empirical: &[f64]) -> String {
    let mut lines = vec![vec!["k".to_string(), "P(K=k) marginal".into(), "P(K=k) empirical".into()]];
    for (k, (p, e)) in model.iter().zip(empirical).enumerate() {
        lines.push(vec![k.to_string(), format!("{p:.4}"), format!("{e:.4}")]);
    }
    align(&lines)
}

/// Per-repeat rows followed by `mean±std`.
pub fn aggregate_text(agg: &AggregateReport) -> String {
    let mut lines = vec![table_header(&agg.attribute_names)];
    for (i, r) in agg.runs.iter().enumerate() {
        let mut row = vec![format!("repeat {i}")];
        row.extend(r.final_metrics.per_attribute_accuracy.iter().map(|a| format!("{a:.2}")));
        row.push(format!("{:.2}", r.final_metrics.malignancy_accuracy));
        lines.push(row);
    }
    let mut summary = vec!["mean±std".to_string()];
    summary.extend(agg.per_attribute_accuracy.iter().map(|m| m.to_string()));
    summary.push(agg.malignancy_accuracy.to_string());
    lines.push(summary);
    let mut out = align(&lines);
    let first = &agg.runs[0];
    let _ = writeln!(
        out,
        "\nrepeats: {}  annotations: {} seed + {} requested of {} training samples",
        agg.n_repeats, first.seed_count, first.requested_count, first.n_train
    );
    out.push_str("\nk attributes correct (mean over repeats, marginal model):\n");
    let mut k_lines = vec![vec!["k".to_string(), "P(K=k)".into()]];
    for (k, m) in agg.k_correct_probs.iter().enumerate() {
        k_lines.push(vec![k.to_string(), format!("{:.4}±{:.4}", m.mean, m.std)]);
    }
    out.push_str(&align(&k_lines));
    out
}

pub fn aggregate_csv(agg: &AggregateReport) -> String {
    let mut out = String::from("run,rng_seed,seed_count,requested_count,oracle_reads");
    for n in &agg.attribute_names {
        let _ = write!(out, ",{n}");
    }
    out.push_str(",malignancy\n");
    for (i, r) in agg.runs.iter().enumerate() {
        let _ = write!(
            out,
            "{i},{},{},{},{}",
            r.config.rng_seed, r.seed_count, r.requested_count, r.oracle_reads
        );
        for a in &r.final_metrics.per_attribute_accuracy {
            let _ = write!(out, ",{a}");
        }
        let _ = writeln!(out, ",{}", r.final_metrics.malignancy_accuracy);
    }
    for (label, pick) in [("mean", 0), ("std", 1)] {
        let v = |m: &crate::stats::MeanStd| if pick == 0 { m.mean } else { m.std };
        let _ = write!(out, "{label},,,,");
        for m in &agg.per_attribute_accuracy {
            let _ = write!(out, ",{}", v(m));
        }
        let _ = writeln!(out, ",{}", v(&agg.malignancy_accuracy));
    }
    out
}

fn status_csv(outcome: &RunOutcome) -> String {
    let mut out = String::from("status,resume_epoch,n_seed,n_requested,n_pseudo,malignancy");
    for n in &outcome.report.final_metrics.attribute_names {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for s in &outcome.report.per_status {
        let _ = write!(
            out,
            "st{},{},{},{},{},{}",
            s.status, s.resume_epoch, s.n_seed, s.n_requested, s.n_pseudo, s.malignancy_accuracy
        );
        for a in &s.per_attribute_accuracy {
            let _ = write!(out, ",{a}");
        }
        out.push('\n');
    }
    out
}

fn seeds_csv(outcome: &RunOutcome) -> String {
    let mut out = String::from("id,cluster,similarity\n");
    for s in &outcome.seeds {
        let cluster = s.cluster.map(|c| c.to_string()).unwrap_or_default();
        let sim = s.similarity.map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{cluster},{sim}", s.id);
    }
    out
}

/// Writes the full layout for a `train` invocation.
pub fn write_experiment(
    dir: &Path,
    config: &ExperimentConfig,
    dataset: &Dataset,
    outcomes: &[RunOutcome],
    aggregate: &AggregateReport,
) -> Result<PathBuf> {
    let mut rd = RunDir::create(dir)?;
    rd.write("config.txt", config.to_text())?;
    rd.write_json("report.json", aggregate)?;
    rd.write("report.csv", aggregate_csv(aggregate))?;
    rd.write("report.txt", aggregate_text(aggregate))?;
    let timing: Vec<&Timing> = outcomes.iter().map(|o| &o.report.timing).collect();
    rd.write_json("timing.json", &timing)?;
    for (i, o) in outcomes.iter().enumerate() {
        let base = format!("repeat_{i}");
        rd.write(&format!("{base}/seeds.csv"), seeds_csv(o))?;
        rd.write(&format!("{base}/status.csv"), status_csv(o))?;
        for t in &o.traces {
            let rel = format!("{base}/acquisition_st{}.csv", t.status);
            write_trace(&rd.root().join(&rel), dataset, &t.pool, &t.scores)?;
            rd.track(&rel);
        }
        for (label, pred) in &o.checkpoints {
            let rel = format!("{base}/checkpoints/{label}");
            save_checkpoint(&rd.root().join(&rel), pred, dataset.schema())?;
            rd.track(&format!("{rel}/manifest.json"));
            rd.track(&format!("{rel}/weights.bin"));
        }
    }
    rd.finish("train")
}

/// Writes the ablation table in text, CSV and JSON.
pub fn write_ablation(dir: &Path, config: &ExperimentConfig, result: &AblationResult) -> Result<PathBuf> {
    let mut rd = RunDir::create(dir)?;
    rd.write("config.txt", config.to_text())?;
    rd.write("ablation.txt", result.to_text())?;
    rd.write("ablation.csv", result.to_csv())?;
    rd.write_json("ablation.json", result)?;
    rd.finish("ablate")
}
