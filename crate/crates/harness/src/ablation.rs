//! Hyperparameter sweeps: certainty-threshold grid search, unlabelled-ratio
//! sweep, checkpoint-averaging variants, and MC-pass timing.

use std::time::Instant;

use ssdg_core::averaging::{variant_average, CheckpointTriple, Variant};
use ssdg_core::net::NetworkSpec;
use ssdg_core::train::{train_run, GatePolicy, LossBreakdown, TrainObserver};
use ssdg_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{
    self, leave_one_domain_out, mean, prepare_sources, run_trials, SingleRun, TargetSet,
};

/// Certainty-threshold sweep outcome. Rows are (eta, mean validation
/// accuracy over seeds), ascending by eta.
#[derive(Debug, Clone)]
pub struct EtaGrid {
    pub rows: Vec<(f64, f64)>,
    pub best_eta: f64,
}

/// Train with the full gate at each threshold and pick the one maximizing
/// mean best-epoch validation accuracy; ties go to the smallest value.
///
/// Selection is by validation only. The target domain is never generated
/// here, let alone evaluated.
pub fn grid_search_eta(cfg: &ExperimentConfig, values: &[f64]) -> Result<EtaGrid> {
    if values.is_empty() {
        return Err(Error::EmptyInput("eta grid"));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(Error::invalid(
            "eta",
            format!("grid value {v} outside (0, 1]"),
        ));
    }
    let benchmark = cfg.benchmark();
    let sources: Vec<_> = benchmark
        .iter()
        .filter(|d| d.domain_id != cfg.target)
        .cloned()
        .collect();
    if sources.is_empty() {
        return Err(Error::invalid(
            "benchmark",
            "holding out the target leaves no source domains",
        ));
    }

    let mut grid: Vec<f64> = values.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();

    let mut rows = Vec::with_capacity(grid.len());
    for &eta in &grid {
        let mut accs = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let data =
                prepare_sources(&sources, cfg.labels_per_class, cfg.train_fraction, seed)?;
            let mut train = cfg.train.clone();
            train.eta = eta;
            train.seed = seed;
            let run = train_run(
                &data,
                &train,
                GatePolicy::Upl,
                &mut ssdg_core::train::NoopObserver,
            )?;
            accs.push(run.metrics[run.best_epoch].val_accuracy);
        }
        rows.push((eta, mean(&accs)));
    }

    // Ascending scan with strict improvement keeps the smallest tied eta.
    let mut best = rows[0];
    for &row in &rows[1..] {
        if row.1 > best.1 {
            best = row;
        }
    }
    Ok(EtaGrid {
        rows,
        best_eta: best.0,
    })
}

/// One row of the unlabelled-ratio sweep.
#[derive(Debug, Clone, Copy)]
pub struct MuRow {
    pub mu: usize,
    pub mean: f64,
    pub std: f64,
}

/// Run the configured (target, method) trials once per ratio value.
pub fn ablate_mu(cfg: &ExperimentConfig, values: &[usize]) -> Result<Vec<MuRow>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("mu values"));
    }
    if values.contains(&0) {
        return Err(Error::invalid("mu", "ratio values must be positive"));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &mu in values {
        let mut sub = cfg.clone();
        sub.train.mu = mu;
        let outcome = run_trials(&sub)?;
        rows.push(MuRow {
            mu,
            mean: outcome.row.mean,
            std: outcome.row.std,
        });
    }
    Ok(rows)
}

/// Target accuracy of all seven averaging variants, in report order.
pub fn ablate_ma_variants(
    spec: &NetworkSpec,
    triple: &CheckpointTriple,
    target: &TargetSet,
) -> Result<Vec<(&'static str, f64)>> {
    let mut rows = Vec::with_capacity(Variant::ALL.len());
    for variant in Variant::ALL {
        let params = variant_average(triple, variant)?;
        rows.push((variant.label(), target.accuracy(spec, &params)?));
    }
    Ok(rows)
}

/// Train once (first trial seed) and evaluate the seven variants on the
/// configured target.
pub fn run_ma_ablation(
    cfg: &ExperimentConfig,
) -> Result<(Vec<(&'static str, f64)>, SingleRun)> {
    let seed = *cfg
        .seeds
        .first()
        .ok_or(Error::EmptyInput("trial seeds"))?;
    let holdout = leave_one_domain_out(&cfg.benchmark(), &cfg.target)?;
    let run = experiment::run_single(cfg, &holdout, seed)?;
    let rows = ablate_ma_variants(&run.result.spec, &run.result.triple, &holdout.target)?;
    Ok((rows, run))
}

/// Observer that timestamps iteration boundaries.
struct IterationTimer {
    last: Instant,
    millis: Vec<f64>,
}

impl IterationTimer {
    fn new() -> Self {
        Self {
            last: Instant::now(),
            millis: Vec::new(),
        }
    }
}

impl TrainObserver for IterationTimer {
    fn on_iteration(&mut self, _epoch: usize, _iteration: usize, _loss: &LossBreakdown) {
        let now = Instant::now();
        self.millis.push((now - self.last).as_secs_f64() * 1e3);
        self.last = now;
    }
}

/// One row of the MC-pass timing table.
#[derive(Debug, Clone, Copy)]
pub struct TimingRow {
    pub mc_passes: usize,
    pub ms_per_iteration: f64,
}

/// Measure mean per-iteration wall time for each MC pass count on this
/// machine. The first `warmup` iterations are discarded; at least `timed`
/// iterations contribute to the mean.
pub fn measure_mc_overhead(
    cfg: &ExperimentConfig,
    n_values: &[usize],
    warmup: usize,
    timed: usize,
) -> Result<Vec<TimingRow>> {
    if n_values.is_empty() {
        return Err(Error::EmptyInput("MC pass counts"));
    }
    if n_values.contains(&0) {
        return Err(Error::invalid("mc_passes", "pass counts must be positive"));
    }
    if timed == 0 {
        return Err(Error::invalid("timed", "need at least one timed iteration"));
    }
    let benchmark = cfg.benchmark();
    let sources: Vec<_> = benchmark
        .iter()
        .filter(|d| d.domain_id != cfg.target)
        .cloned()
        .collect();
    let seed = *cfg.seeds.first().ok_or(Error::EmptyInput("trial seeds"))?;
    let data = prepare_sources(&sources, cfg.labels_per_class, cfg.train_fraction, seed)?;

    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let mut train = cfg.train.clone();
        train.mc_passes = n;
        train.epochs = 1;
        train.iterations_per_epoch = warmup + timed;
        train.seed = seed;
        let mut timer = IterationTimer::new();
        train_run(&data, &train, GatePolicy::Upl, &mut timer)?;
        rows.push(TimingRow {
            mc_passes: n,
            ms_per_iteration: mean(&timer.millis[warmup..]),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigBuilder;

    fn tiny_config() -> ExperimentConfig {
        let mut b = ConfigBuilder::new();
        for kv in [
            "num_classes=3",
            "examples_per_class=20",
            "hidden_dims=8",
            "epochs=2",
            "iterations_per_epoch=4",
            "batch_size=4",
            "mu=2",
            "mc_passes=2",
            "seeds=1",
            "domain.a=style,0.2,31",
            "domain.b=background,0.5,32",
            "domain.c=texture,0.2,33",
            "target=a",
        ] {
            b.set(kv).unwrap();
        }
        b.finish().unwrap().0
    }

    #[test]
    fn eta_grid_rejects_bad_input_and_returns_grid_member() {
        let cfg = tiny_config();
        assert!(grid_search_eta(&cfg, &[]).is_err());
        assert!(grid_search_eta(&cfg, &[0.0]).is_err());
        assert!(grid_search_eta(&cfg, &[1.5]).is_err());

        let grid = [0.7, 0.3];
        let out = grid_search_eta(&cfg, &grid).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows[0].0 < out.rows[1].0);
        assert!(grid.contains(&out.best_eta));

        let single = grid_search_eta(&cfg, &[0.4]).unwrap();
        assert_eq!(single.best_eta, 0.4);
    }

    #[test]
    fn mu_sweep_emits_one_row_per_value() {
        let cfg = tiny_config();
        let rows = ablate_mu(&cfg, &[1, 2]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mu, 1);
        assert_eq!(rows[1].mu, 2);
        assert!(ablate_mu(&cfg, &[]).is_err());
        assert!(ablate_mu(&cfg, &[0]).is_err());
    }

    #[test]
    fn ma_ablation_emits_seven_ordered_variants() {
        let cfg = tiny_config();
        let (rows, _) = run_ma_ablation(&cfg).unwrap();
        let labels: Vec<&str> = rows.iter().map(|(l, _)| *l).collect();
        assert_eq!(
            labels,
            ["last", "best", "ema", "last+ema", "last+best", "best+ema", "avg"]
        );
    }

    #[test]
    fn timing_reports_one_row_per_pass_count() {
        let cfg = tiny_config();
        let rows = measure_mc_overhead(&cfg, &[1, 3], 1, 3).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.ms_per_iteration >= 0.0));
        assert!(measure_mc_overhead(&cfg, &[], 1, 3).is_err());
    }
}
