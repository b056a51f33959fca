//! Leave-one-domain-out protocol, the four-method grid, and multi-seed
//! trials.
//!
//! Target-domain data is quarantined: [`leave_one_domain_out`] hands it
//! back as a [`TargetSet`], which exposes evaluation entry points but never
//! the examples themselves, so no training or model-selection path can
//! touch them.

use std::path::Path;

use ssdg_core::averaging::model_average;
use ssdg_core::data::{generate_domain, split_labelled, train_val_split, DomainSpec};
use ssdg_core::metrics;
use ssdg_core::net::NetworkSpec;
use ssdg_core::rng;
use ssdg_core::tensor::ParamSet;
use ssdg_core::train::{
    train_run, GatePolicy, RunResult, TrainData, TrainObserver,
};
use ssdg_core::uncertainty::GateDecision;
use ssdg_core::{Error, Result};

use crate::config::ExperimentConfig;

/// The four training/inference combinations under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Confidence gate, best-validation checkpoint.
    FixMatch,
    /// Confidence and certainty gates, best-validation checkpoint.
    Upl,
    /// Confidence gate, averaged checkpoint.
    Ma,
    /// Confidence and certainty gates, averaged checkpoint.
    Uplm,
}

/// Which parameters a method evaluates with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inference {
    /// The best-validation-epoch checkpoint.
    Best,
    /// The weighted average of best, last, and EMA checkpoints.
    Avg,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::FixMatch, Method::Upl, Method::Ma, Method::Uplm];

    pub fn label(self) -> &'static str {
        match self {
            Method::FixMatch => "fixmatch",
            Method::Upl => "upl",
            Method::Ma => "ma",
            Method::Uplm => "uplm",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "fixmatch" => Ok(Method::FixMatch),
            "upl" => Ok(Method::Upl),
            "ma" => Ok(Method::Ma),
            "uplm" => Ok(Method::Uplm),
            other => Err(Error::invalid(
                "method",
                format!("unknown method {other:?} (fixmatch|upl|ma|uplm)"),
            )),
        }
    }

    /// Total and pure: every method maps to exactly one gate policy and one
    /// inference parameter choice.
    pub fn dispatch(self) -> (GatePolicy, Inference) {
        match self {
            Method::FixMatch => (GatePolicy::Confidence, Inference::Best),
            Method::Upl => (GatePolicy::Upl, Inference::Best),
            Method::Ma => (GatePolicy::Confidence, Inference::Avg),
            Method::Uplm => (GatePolicy::Upl, Inference::Avg),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// The held-out domain, reachable only through evaluation calls.
#[derive(Debug, Clone)]
pub struct TargetSet {
    domain_id: String,
    examples: Vec<ssdg_core::data::Example>,
}

impl TargetSet {
    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Top-1 accuracy (percent) of the given parameters on the target.
    pub fn accuracy(&self, spec: &NetworkSpec, params: &ParamSet) -> Result<f64> {
        metrics::evaluate_accuracy(spec, params, &self.examples)
    }

    /// Penultimate-layer features of every target example, written as CSV.
    pub fn write_feature_dump(
        &self,
        path: &Path,
        spec: &NetworkSpec,
        params: &ParamSet,
    ) -> Result<()> {
        metrics::feature_dump(spec, params, &self.examples, path)
    }
}

/// Sources for training plus the quarantined target.
#[derive(Debug, Clone)]
pub struct Holdout {
    pub sources: Vec<DomainSpec>,
    pub target: TargetSet,
    pub warnings: Vec<String>,
}

/// Split a benchmark into source domains and an evaluation-only target.
pub fn leave_one_domain_out(benchmark: &[DomainSpec], target_id: &str) -> Result<Holdout> {
    let target_spec = benchmark
        .iter()
        .find(|d| d.domain_id == target_id)
        .ok_or_else(|| {
            Error::invalid(
                "target",
                format!("domain {target_id:?} is not part of the benchmark"),
            )
        })?;
    let sources: Vec<DomainSpec> = benchmark
        .iter()
        .filter(|d| d.domain_id != target_id)
        .cloned()
        .collect();
    if sources.is_empty() {
        return Err(Error::invalid(
            "benchmark",
            "holding out the target leaves no source domains",
        ));
    }
    let mut warnings = Vec::new();
    if sources.len() == 1 {
        warnings.push(format!(
            "only one source domain ({}) remains after holding out {target_id}",
            sources[0].domain_id
        ));
    }
    let target = TargetSet {
        domain_id: target_spec.domain_id.clone(),
        examples: generate_domain(target_spec)?,
    };
    Ok(Holdout {
        sources,
        target,
        warnings,
    })
}

/// Generate and split every source domain, then pool the splits.
///
/// The train/validation split is keyed by the domain seed alone, so the
/// validation set is stable across trials; the labelled/unlabelled split is
/// additionally keyed by the trial seed, giving each trial fresh labelled
/// examples.
pub fn prepare_sources(
    sources: &[DomainSpec],
    labels_per_class: usize,
    train_fraction: f64,
    trial_seed: u64,
) -> Result<TrainData> {
    let mut data = TrainData {
        labelled: Vec::new(),
        unlabelled: Vec::new(),
        val: Vec::new(),
    };
    for spec in sources {
        let examples = generate_domain(spec)?;
        let (train, val) = train_val_split(&examples, train_fraction, spec.seed)?;
        let split_seed = rng::derive_seed(spec.seed, &[trial_seed]);
        let ds = split_labelled(&train, labels_per_class, split_seed)?;
        data.labelled.extend(ds.labelled);
        data.unlabelled.extend(ds.unlabelled);
        data.val.extend(val);
    }
    Ok(data)
}

/// One gate evaluation as seen by the training loop.
#[derive(Debug, Clone, Copy)]
pub struct GateEvent {
    pub epoch: usize,
    pub iteration: usize,
    pub example_id: usize,
    pub decision: GateDecision,
}

/// Observer that records every gate decision of a run.
#[derive(Debug, Clone, Default)]
pub struct GateTrace {
    pub events: Vec<GateEvent>,
}

impl TrainObserver for GateTrace {
    fn on_gate(
        &mut self,
        epoch: usize,
        iteration: usize,
        example_id: usize,
        decision: &GateDecision,
    ) {
        self.events.push(GateEvent {
            epoch,
            iteration,
            example_id,
            decision: *decision,
        });
    }
}

/// One completed trial: the training result, the method's inference
/// parameters, and the target accuracy they achieve.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub seed: u64,
    pub result: RunResult,
    pub inference: ParamSet,
    pub target_accuracy: f64,
    pub trace: GateTrace,
    pub data: TrainData,
}

/// Train once with the given trial seed and evaluate per the method.
pub fn run_single(cfg: &ExperimentConfig, holdout: &Holdout, trial_seed: u64) -> Result<SingleRun> {
    let data = prepare_sources(
        &holdout.sources,
        cfg.labels_per_class,
        cfg.train_fraction,
        trial_seed,
    )?;
    let mut train = cfg.train.clone();
    train.seed = trial_seed;
    let (policy, inference) = cfg.method.dispatch();

    let mut trace = GateTrace::default();
    let mut result = train_run(&data, &train, policy, &mut trace)?;

    // Backfill per-epoch target accuracy for the metrics CSV. Evaluation
    // only: nothing downstream of this reaches training or selection.
    for (record, params) in result.metrics.iter_mut().zip(&result.epoch_params) {
        record.target_accuracy = Some(holdout.target.accuracy(&result.spec, params)?);
    }

    let params = match inference {
        Inference::Best => result.triple.best.clone(),
        Inference::Avg => model_average(&result.triple, &train.ma_weights)?,
    };
    let target_accuracy = holdout.target.accuracy(&result.spec, &params)?;

    Ok(SingleRun {
        seed: trial_seed,
        result,
        inference: params,
        target_accuracy,
        trace,
        data,
    })
}

/// One (target, method) cell of the results table.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub target: String,
    pub method: Method,
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
}

/// Result rows plus the derived per-method average rows.
#[derive(Debug, Clone, Default)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    /// Per-method average over target rows; the mean of the average row is
    /// the arithmetic mean of the per-target means, its std the mean of the
    /// per-target stds.
    pub fn with_average_rows(&self) -> ResultsTable {
        let mut out = self.clone();
        for method in Method::ALL {
            let targets: Vec<&ResultRow> = self
                .rows
                .iter()
                .filter(|r| r.method == method && r.target != "average")
                .collect();
            if targets.is_empty() {
                continue;
            }
            let means: Vec<f64> = targets.iter().map(|r| r.mean).collect();
            let stds: Vec<f64> = targets.iter().map(|r| r.std).collect();
            out.push(ResultRow {
                target: "average".into(),
                method,
                mean: mean(&means),
                std: mean(&stds),
                per_seed: Vec::new(),
            });
        }
        out
    }

    /// Deterministic CSV rendering.
    pub fn csv(&self) -> String {
        let mut s = String::from("target,method,mean_acc,std_acc\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                r.target,
                r.method.label(),
                r.mean,
                r.std
            ));
        }
        s
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation: a single value gives exactly zero.
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// A (target, method) row aggregated over trial seeds, plus the per-seed
/// runs behind it.
#[derive(Debug)]
pub struct TrialOutcome {
    pub row: ResultRow,
    pub runs: Vec<SingleRun>,
    pub warnings: Vec<String>,
}

/// Run every trial seed for the configured (target, method) pair and
/// aggregate mean and std of target accuracy.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<TrialOutcome> {
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("seeds", "need at least one trial seed"));
    }
    let holdout = leave_one_domain_out(&cfg.benchmark(), &cfg.target)?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let run = run_single(cfg, &holdout, seed).map_err(|e| {
            Error::Internal(format!(
                "trial seed {seed}, target {}, method {}: {e}",
                cfg.target, cfg.method
            ))
        })?;
        runs.push(run);
    }
    let accs: Vec<f64> = runs.iter().map(|r| r.target_accuracy).collect();
    let row = ResultRow {
        target: cfg.target.clone(),
        method: cfg.method,
        mean: mean(&accs),
        std: population_std(&accs),
        per_seed: accs,
    };
    Ok(TrialOutcome {
        row,
        runs,
        warnings: holdout.warnings,
    })
}

/// Run the full target x method grid. Returns the table (without average
/// rows) and every underlying run, labelled `{target}_{method}_s{seed}`.
pub fn full_grid(cfg: &ExperimentConfig) -> Result<(ResultsTable, Vec<(String, SingleRun)>)> {
    let mut table = ResultsTable::default();
    let mut all_runs = Vec::new();
    for domain in &cfg.domains {
        for method in Method::ALL {
            let mut sub = cfg.clone();
            sub.target = domain.id.clone();
            sub.method = method;
            let outcome = run_trials(&sub)?;
            table.push(outcome.row);
            for run in outcome.runs {
                let label = format!("{}_{}_s{}", domain.id, method.label(), run.seed);
                all_runs.push((label, run));
            }
        }
    }
    Ok((table, all_runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssdg_core::data::ShiftFamily;

    fn bench(k: usize) -> Vec<DomainSpec> {
        (0..k)
            .map(|i| DomainSpec {
                domain_id: format!("d{i}"),
                num_classes: 3,
                examples_per_class: 20,
                feature_dim: 2,
                shift_family: ShiftFamily::Background,
                shift_magnitude: 0.5 * i as f64,
                seed: 30 + i as u64,
            })
            .collect()
    }

    #[test]
    fn dispatch_covers_the_four_methods() {
        assert_eq!(
            Method::FixMatch.dispatch(),
            (GatePolicy::Confidence, Inference::Best)
        );
        assert_eq!(Method::Upl.dispatch(), (GatePolicy::Upl, Inference::Best));
        assert_eq!(Method::Ma.dispatch(), (GatePolicy::Confidence, Inference::Avg));
        assert_eq!(Method::Uplm.dispatch(), (GatePolicy::Upl, Inference::Avg));
        for m in Method::ALL {
            assert_eq!(Method::parse(m.label()).unwrap(), m);
        }
        assert!(Method::parse("fixmatch++").is_err());
    }

    #[test]
    fn holdout_separates_target_from_sources() {
        let benchmark = bench(4);
        let holdout = leave_one_domain_out(&benchmark, "d2").unwrap();
        assert_eq!(holdout.sources.len(), 3);
        assert!(holdout.sources.iter().all(|d| d.domain_id != "d2"));
        assert_eq!(holdout.target.domain_id(), "d2");
        assert_eq!(holdout.target.len(), 60);
        assert!(holdout.warnings.is_empty());

        let two = leave_one_domain_out(&bench(2), "d0").unwrap();
        assert_eq!(two.sources.len(), 1);
        assert_eq!(two.warnings.len(), 1);

        assert!(leave_one_domain_out(&benchmark, "nope").is_err());
    }

    #[test]
    fn source_preparation_pools_and_reseeds_label_splits() {
        let benchmark = bench(3);
        let a = prepare_sources(&benchmark, 4, 0.9, 1).unwrap();
        let b = prepare_sources(&benchmark, 4, 0.9, 1).unwrap();
        let c = prepare_sources(&benchmark, 4, 0.9, 2).unwrap();

        // 3 domains x 3 classes x 4 labels
        assert_eq!(a.labelled.len(), 36);
        assert_eq!(a.labelled.len() + a.unlabelled.len() + a.val.len(), 180);
        assert_eq!(a.labelled, b.labelled);
        // same raw domains, different labelled subset
        assert_ne!(a.labelled, c.labelled);
        // validation split is trial-independent
        assert_eq!(a.val, c.val);
    }

    #[test]
    fn average_rows_take_the_mean_of_target_means() {
        let mut table = ResultsTable::default();
        for (t, acc) in [("a", 70.0), ("b", 80.0), ("c", 90.0)] {
            table.push(ResultRow {
                target: t.into(),
                method: Method::Uplm,
                mean: acc,
                std: 1.0,
                per_seed: vec![acc],
            });
        }
        let full = table.with_average_rows();
        let avg = full
            .rows
            .iter()
            .find(|r| r.target == "average")
            .unwrap();
        assert!((avg.mean - 80.0).abs() < 1e-9);
        let csv = full.csv();
        assert!(csv.starts_with("target,method,mean_acc,std_acc\n"));
        assert_eq!(csv.lines().count(), 1 + 4);
    }

    #[test]
    fn population_std_of_single_value_is_zero() {
        assert_eq!(population_std(&[42.0]), 0.0);
        assert!((population_std(&[1.0, 3.0]) - 1.0).abs() < 1e-12);
    }
}
