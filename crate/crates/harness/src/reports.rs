//! Report files and the run manifest.
//!
//! Every data artifact (results table, per-run metrics, calibration series,
//! gate logs) is written deterministically: same inputs, same bytes. The
//! manifest records the fully resolved config, so a run can be replayed
//! from it; its `[timing]` section is the one part that varies between
//! otherwise identical runs.

use std::fs;
use std::path::{Path, PathBuf};

use ssdg_core::metrics::{self, CalibrationSeries, MetricsRecord};
use ssdg_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{ResultsTable, SingleRun};

/// One gate-log line.
#[derive(Debug, Clone, Copy)]
pub struct GateRow {
    pub example_id: usize,
    pub pseudo_label: usize,
    pub confidence: f64,
    pub certainty: f64,
    pub selected: bool,
}

/// Everything reportable about one training run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub label: String,
    pub metrics: Vec<MetricsRecord>,
    /// Present when the run produced per-iteration uncertainty data
    /// (supervised runs do not).
    pub calibration: Option<CalibrationSeries>,
    pub gate_rows: Vec<GateRow>,
}

impl RunArtifacts {
    pub fn from_run(label: impl Into<String>, run: &SingleRun, iterations_per_epoch: usize) -> Result<Self> {
        let calibration = if run.result.iteration_uncertainty.is_empty() {
            None
        } else {
            Some(metrics::uncertainty_ece_series(
                &run.result.iteration_uncertainty,
                &run.result.iteration_ece,
                iterations_per_epoch,
            )?)
        };
        let gate_rows = run
            .trace
            .events
            .iter()
            .map(|e| GateRow {
                example_id: e.example_id,
                pseudo_label: e.decision.pseudo_label,
                confidence: e.decision.confidence,
                certainty: e.decision.certainty_at_label,
                selected: e.decision.selected,
            })
            .collect();
        Ok(Self {
            label: label.into(),
            metrics: run.result.metrics.clone(),
            calibration,
            gate_rows,
        })
    }
}

fn write_gate_log(path: &Path, rows: &[GateRow]) -> Result<()> {
    let mut s = String::from("example_id,pseudo_label,confidence,certainty,selected\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.6},{:.6},{}\n",
            r.example_id,
            r.pseudo_label,
            r.confidence,
            r.certainty,
            u8::from(r.selected)
        ));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Everything needed to reproduce and locate a run.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    /// Artifact version (the crate version).
    pub version: String,
    /// Fully resolved config as flat pairs.
    pub config: Vec<(String, String)>,
    /// Label -> path of every file the run wrote.
    pub outputs: Vec<(String, String)>,
    /// Label -> seconds. Informational; varies between runs.
    pub timings: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.to_flat(),
            outputs: Vec::new(),
            timings: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::from("# ssdg run manifest\n");
        s.push_str(&format!("version = {}\n", self.version));
        s.push_str("\n[config]\n");
        for (k, v) in &self.config {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str("\n[outputs]\n");
        for (k, v) in &self.outputs {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str("\n[timing]\n");
        for (k, v) in &self.timings {
            s.push_str(&format!("{k} = {v:.3}\n"));
        }
        if !self.warnings.is_empty() {
            s.push_str("\n[warnings]\n");
            for w in &self.warnings {
                s.push_str(&format!("- {w}\n"));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut manifest = RunManifest::default();
        let mut section = "";
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name {
                    "config" | "outputs" | "timing" | "warnings" => name,
                    other => {
                        return Err(Error::invalid(
                            "manifest",
                            format!("line {}: unknown section [{other}]", idx + 1),
                        ))
                    }
                };
                continue;
            }
            if section == "warnings" {
                manifest
                    .warnings
                    .push(line.strip_prefix("- ").unwrap_or(line).to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid("manifest", format!("line {}: expected key = value", idx + 1))
            })?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            match section {
                "" if key == "version" => manifest.version = value,
                "config" => manifest.config.push((key, value)),
                "outputs" => manifest.outputs.push((key, value)),
                "timing" => {
                    let secs: f64 = value.parse().map_err(|e| {
                        Error::invalid("manifest", format!("line {}: {e}", idx + 1))
                    })?;
                    manifest.timings.push((key, secs));
                }
                _ => {
                    return Err(Error::invalid(
                        "manifest",
                        format!("line {}: {key:?} outside any section", idx + 1),
                    ))
                }
            }
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Write the results table, per-run artifacts, and the manifest into `dir`.
///
/// The manifest is written last, with its `outputs` section listing every
/// file produced. Returns the manifest path.
pub fn emit_reports(
    dir: &Path,
    table: &ResultsTable,
    artifacts: &[RunArtifacts],
    manifest: &mut RunManifest,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let record = |manifest: &mut RunManifest, label: &str, path: &Path| {
        manifest
            .outputs
            .push((label.to_string(), path.display().to_string()));
    };

    let results_path = dir.join("results.csv");
    fs::write(&results_path, table.csv())?;
    record(manifest, "results", &results_path);

    for art in artifacts {
        let metrics_path = dir.join(format!("metrics_{}.csv", art.label));
        metrics::write_metrics_csv(&metrics_path, &art.metrics)?;
        record(manifest, &format!("metrics_{}", art.label), &metrics_path);

        if let Some(series) = &art.calibration {
            let cal_path = dir.join(format!("calibration_{}.csv", art.label));
            series.write_csv(&cal_path)?;
            record(manifest, &format!("calibration_{}", art.label), &cal_path);
        }
        if !art.gate_rows.is_empty() {
            let gate_path = dir.join(format!("gate_{}.csv", art.label));
            write_gate_log(&gate_path, &art.gate_rows)?;
            record(manifest, &format!("gate_{}", art.label), &gate_path);
        }
    }

    let manifest_path = dir.join("manifest.txt");
    fs::write(&manifest_path, manifest.render())?;
    Ok(manifest_path)
}
