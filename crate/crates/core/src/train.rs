//! FixMatch-style semi-supervised training over aggregated source domains,
//! with pluggable pseudo-label gating.
//!
//! Per iteration: compose a batch (B labelled, mu*B unlabelled with
//! weak/strong views), gate the unlabelled examples on their weak views,
//! combine the supervised loss with the gated unsupervised loss, take one
//! Nesterov SGD step, and update the EMA shadow. Per epoch: evaluate on the
//! validation split and snapshot the parameters.
//!
//! Hidden ground truth of unlabelled examples is consulted only for metric
//! reporting (pseudo-label precision, batch calibration error); it never
//! reaches gating, losses, or gradients.

use rand::Rng;

use crate::averaging::{AveragingWeights, CheckpointTriple, EmaState};
use crate::data::{strong_augment, weak_augment, AugmentationConfig, Example, UnlabelledExample};
use crate::error::{Error, Result};
use crate::grad::{self, LossTerm};
use crate::metrics::{self, MetricsRecord};
use crate::net::{self, NetworkSpec};
use crate::optim::{self, OptimizerState};
use crate::rng;
use crate::tensor::ParamSet;
use crate::uncertainty::{self, GateDecision};

/// Every knob of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_classes: usize,
    pub hidden_dims: Vec<usize>,
    /// Dropout probability in [0, 1).
    pub dropout_rate: f64,
    /// Confidence threshold in (0, 1].
    pub tau: f64,
    /// Certainty threshold in (0, 1].
    pub eta: f64,
    /// Unsupervised loss weight, >= 0.
    pub lambda: f64,
    /// Labelled batch size B.
    pub batch_size: usize,
    /// Unlabelled ratio: the unlabelled batch holds mu * B examples.
    pub mu: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    /// MC-dropout passes per gated decision.
    pub mc_passes: usize,
    pub ema_decay: f64,
    pub ma_weights: AveragingWeights,
    pub augment: AugmentationConfig,
    pub ece_bins: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            hidden_dims: vec![64, 64],
            dropout_rate: 0.5,
            tau: 0.95,
            eta: 0.5,
            lambda: 1.0,
            batch_size: 8,
            mu: 5,
            lr: 0.03,
            momentum: 0.9,
            epochs: 10,
            iterations_per_epoch: 50,
            mc_passes: 10,
            ema_decay: 0.999,
            ma_weights: AveragingWeights::equal_thirds(),
            augment: AugmentationConfig {
                weak_noise_sigma: 0.1,
                strong_noise_sigma: 0.5,
                strong_mask_count: 1,
            },
            ece_bins: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes", "need at least 2 classes"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid("tau", "must lie in (0, 1]"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::invalid("eta", "must lie in (0, 1]"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be finite and >= 0"));
        }
        if self.batch_size == 0 || self.mu == 0 {
            return Err(Error::invalid("batch_size/mu", "must be positive"));
        }
        if self.epochs == 0 || self.iterations_per_epoch == 0 {
            return Err(Error::invalid("epochs/iterations", "must be positive"));
        }
        if self.mc_passes == 0 {
            return Err(Error::invalid("mc_passes", "need at least one pass"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::invalid("ema_decay", "must lie in [0, 1]"));
        }
        if self.ece_bins == 0 {
            return Err(Error::invalid("ece_bins", "need at least one bin"));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("lr/momentum", "lr > 0, momentum in [0, 1)"));
        }
        self.augment.validate()?;
        AveragingWeights::new(
            self.ma_weights.alpha,
            self.ma_weights.beta,
            self.ma_weights.gamma,
        )?;
        Ok(())
    }

    pub fn unlabelled_batch_size(&self) -> usize {
        self.mu * self.batch_size
    }
}

/// How pseudo-labels are selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatePolicy {
    /// No unsupervised loss at all; only labelled batches are drawn.
    Supervised,
    /// Confidence test only: max(q) >= tau.
    Confidence,
    /// Confidence and certainty tests (the full gate).
    Upl,
}

/// Aggregated training inputs: pooled labelled and unlabelled examples from
/// all source domains, plus the pooled validation split.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub labelled: Vec<Example>,
    pub unlabelled: Vec<UnlabelledExample>,
    pub val: Vec<Example>,
}

impl TrainData {
    fn validate(&self, config: &TrainConfig, policy: GatePolicy) -> Result<usize> {
        if self.labelled.is_empty() {
            return Err(Error::EmptyInput("labelled pool"));
        }
        if self.val.is_empty() {
            return Err(Error::EmptyInput("validation set"));
        }
        if policy != GatePolicy::Supervised && self.unlabelled.is_empty() {
            return Err(Error::EmptyInput("unlabelled pool"));
        }
        let dim = self.labelled[0].features.len();
        for e in self.labelled.iter().chain(self.val.iter()) {
            if e.features.len() != dim {
                return Err(Error::ShapeMismatch {
                    tensor: "example features".into(),
                    expected: format!("{dim} features"),
                    actual: format!("{} features", e.features.len()),
                });
            }
            match e.label {
                None => {
                    return Err(Error::invalid(
                        "examples",
                        "labelled and validation examples must carry labels",
                    ))
                }
                Some(l) if l >= config.num_classes => {
                    return Err(Error::ClassOutOfRange {
                        class: l,
                        num_classes: config.num_classes,
                    })
                }
                Some(_) => {}
            }
        }
        for u in &self.unlabelled {
            if u.features.len() != dim {
                return Err(Error::ShapeMismatch {
                    tensor: "unlabelled features".into(),
                    expected: format!("{dim} features"),
                    actual: format!("{} features", u.features.len()),
                });
            }
        }
        Ok(dim)
    }
}

/// One unlabelled batch slot: the raw example plus its two views.
#[derive(Debug, Clone)]
pub struct UnlabelledViews {
    /// Index into the unlabelled pool; keys the MC streams and gate log.
    pub example_id: usize,
    pub raw: Vec<f64>,
    pub weak: Vec<f64>,
    pub strong: Vec<f64>,
}

/// One iteration's sampled data.
#[derive(Debug, Clone)]
pub struct Batch {
    /// (features, label) pairs, drawn with replacement from the pool.
    pub labelled: Vec<(Vec<f64>, usize)>,
    pub unlabelled: Vec<UnlabelledViews>,
}

/// Draw one batch. Labelled and unlabelled draws come from separate streams
/// keyed by (epoch, iteration), so the labelled sequence is identical
/// whether or not unlabelled data is consumed. `with_unlabelled = false`
/// (supervised runs) skips the unlabelled side entirely.
pub fn compose_batch(
    labelled_pool: &[Example],
    unlabelled_pool: &[UnlabelledExample],
    config: &TrainConfig,
    epoch: usize,
    iteration: usize,
    with_unlabelled: bool,
) -> Result<Batch> {
    if labelled_pool.is_empty() {
        return Err(Error::EmptyInput("labelled pool"));
    }
    let mut lab_rng = rng::stream(
        config.seed,
        &[rng::tag::BATCH_LABELLED, epoch as u64, iteration as u64],
    );
    let mut labelled = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let e = &labelled_pool[lab_rng.gen_range(0..labelled_pool.len())];
        let label = e
            .label
            .ok_or_else(|| Error::invalid("labelled pool", "example without label"))?;
        labelled.push((e.features.clone(), label));
    }

    let mut unlabelled = Vec::new();
    if with_unlabelled {
        if unlabelled_pool.is_empty() {
            return Err(Error::EmptyInput("unlabelled pool"));
        }
        let mut unl_rng = rng::stream(
            config.seed,
            &[rng::tag::BATCH_UNLABELLED, epoch as u64, iteration as u64],
        );
        for _ in 0..config.unlabelled_batch_size() {
            let idx = unl_rng.gen_range(0..unlabelled_pool.len());
            let raw = unlabelled_pool[idx].features.clone();
            let weak = weak_augment(&raw, &config.augment, &mut unl_rng);
            let strong = strong_augment(&raw, &config.augment, &mut unl_rng)?;
            unlabelled.push(UnlabelledViews {
                example_id: idx,
                raw,
                weak,
                strong,
            });
        }
    }
    Ok(Batch {
        labelled,
        unlabelled,
    })
}

/// Mean cross-entropy over the labelled batch.
pub fn supervised_loss(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::EmptyInput("labelled batch"));
    }
    if probs.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            tensor: "labels".into(),
            expected: format!("{} entries", probs.len()),
            actual: format!("{} entries", labels.len()),
        });
    }
    let mut sum = 0.0;
    for (p, &l) in probs.iter().zip(labels) {
        sum += net::cross_entropy(p, l)?;
    }
    Ok(sum / probs.len() as f64)
}

/// Confidence test: max(q) >= tau, inclusive.
pub fn confidence_gate(q: &[f64], tau: f64) -> bool {
    q[net::argmax(q)] >= tau
}

/// Gated cross-entropy on strong views, normalized by the FULL unlabelled
/// batch size (not the selected count). Empty batch contributes 0.
pub fn unsupervised_loss(decisions: &[GateDecision], strong_probs: &[Vec<f64>]) -> Result<f64> {
    if decisions.len() != strong_probs.len() {
        return Err(Error::ShapeMismatch {
            tensor: "strong-view probabilities".into(),
            expected: format!("{} entries", decisions.len()),
            actual: format!("{} entries", strong_probs.len()),
        });
    }
    if decisions.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (d, p) in decisions.iter().zip(strong_probs) {
        if d.selected {
            sum += net::cross_entropy(p, d.pseudo_label)?;
        }
    }
    Ok(sum / decisions.len() as f64)
}

/// l_s + lambda * l_u.
pub fn total_loss(l_s: f64, l_u: f64, lambda: f64) -> f64 {
    l_s + lambda * l_u
}

/// Loss components of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_s: f64,
    pub l_u: f64,
    pub l_final: f64,
    pub gated_count: usize,
}

/// Callbacks into the training loop. Default impls ignore everything.
pub trait TrainObserver {
    fn on_iteration(&mut self, _epoch: usize, _iteration: usize, _loss: &LossBreakdown) {}
    fn on_gate(
        &mut self,
        _epoch: usize,
        _iteration: usize,
        _example_id: usize,
        _decision: &GateDecision,
    ) {
    }
    fn on_epoch(&mut self, _record: &MetricsRecord) {}
}

/// Observer that does nothing.
pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: NetworkSpec,
    pub triple: CheckpointTriple,
    pub metrics: Vec<MetricsRecord>,
    /// Parameter snapshot at the end of each epoch, in epoch order.
    pub epoch_params: Vec<ParamSet>,
    /// Index into `epoch_params` of the best-validation epoch.
    pub best_epoch: usize,
    /// Per-iteration mean predictive variance (one entry per iteration).
    pub iteration_uncertainty: Vec<f64>,
    /// Per-iteration batch calibration error (0 where truth was absent).
    pub iteration_ece: Vec<f64>,
}

/// Run the full training loop. Deterministic in (data, config, policy):
/// repeated calls produce bit-identical parameters and metrics.
pub fn train_run(
    data: &TrainData,
    config: &TrainConfig,
    policy: GatePolicy,
    observer: &mut dyn TrainObserver,
) -> Result<RunResult> {
    config.validate()?;
    let input_dim = data.validate(config, policy)?;
    let spec = NetworkSpec {
        input_dim,
        hidden_dims: config.hidden_dims.clone(),
        num_classes: config.num_classes,
        dropout_rate: config.dropout_rate,
    };
    spec.validate()?;

    let mut params = net::init_params(&spec, &mut rng::stream(config.seed, &[rng::tag::INIT]))?;
    let mut opt = OptimizerState::new(&params, config.lr, config.momentum)?;
    let mut ema = EmaState::new(&params, config.ema_decay)?;

    let with_unlabelled = policy != GatePolicy::Supervised;
    let eta_effective = match policy {
        GatePolicy::Upl => config.eta,
        // Certainty test degenerates to always-true.
        _ => 0.0,
    };

    let mut metrics_out = Vec::with_capacity(config.epochs);
    let mut epoch_params = Vec::with_capacity(config.epochs);
    let mut val_accs = Vec::with_capacity(config.epochs);
    let mut iteration_uncertainty = Vec::new();
    let mut iteration_ece = Vec::new();

    for epoch in 0..config.epochs {
        let mut epoch_decisions: Vec<GateDecision> = Vec::new();
        let mut epoch_truths: Vec<Option<usize>> = Vec::new();
        let mut epoch_batch_uncertainty = Vec::new();
        let mut epoch_batch_ece = Vec::new();

        for iteration in 0..config.iterations_per_epoch {
            let batch = compose_batch(
                &data.labelled,
                &data.unlabelled,
                config,
                epoch,
                iteration,
                with_unlabelled,
            )?;

            // Supervised side: dropout masks in batch order, then loss terms.
            let mut lab_mask_rng = rng::stream(
                config.seed,
                &[rng::tag::DROPOUT_LABELLED, epoch as u64, iteration as u64],
            );
            let mut labelled_probs = Vec::with_capacity(batch.labelled.len());
            let mut labels = Vec::with_capacity(batch.labelled.len());
            let mut terms_s = Vec::with_capacity(batch.labelled.len());
            let w_s = 1.0 / batch.labelled.len() as f64;
            for (features, label) in &batch.labelled {
                let mask = net::draw_mask(&spec, Some(&mut lab_mask_rng));
                let cache = net::forward_row(&spec, &params, features, mask.as_deref())?;
                labelled_probs.push(cache.probs);
                labels.push(*label);
                terms_s.push(LossTerm {
                    input: features.clone(),
                    target: *label,
                    weight: w_s,
                    mask,
                });
            }
            let l_s = supervised_loss(&labelled_probs, &labels)?;

            // Unlabelled side: gate on weak views, loss on strong views.
            let mut decisions = Vec::with_capacity(batch.unlabelled.len());
            let mut strong_probs = Vec::with_capacity(batch.unlabelled.len());
            let mut terms_u = Vec::new();
            let mut l_u = 0.0;
            if with_unlabelled {
                let mut batch_variance_sum = 0.0;
                let mut ece_confidences = Vec::new();
                let mut ece_correct = Vec::new();

                let mut strong_mask_rng = rng::stream(
                    config.seed,
                    &[rng::tag::DROPOUT_STRONG, epoch as u64, iteration as u64],
                );
                let w_u = 1.0 / batch.unlabelled.len() as f64;
                for views in &batch.unlabelled {
                    let q = metrics::eval_probs(&spec, &params, &views.weak)?;
                    let profile = uncertainty::profile(
                        &spec,
                        &params,
                        &views.weak,
                        config.mc_passes,
                        config.seed,
                        views.example_id as u64,
                    )?;
                    let decision =
                        uncertainty::upl_gate(&q, &profile.certainty, config.tau, eta_effective);
                    observer.on_gate(epoch, iteration, views.example_id, &decision);
                    batch_variance_sum += profile.mean_variance();

                    let truth = data.unlabelled[views.example_id].eval_ground_truth();
                    if let Some(t) = truth {
                        ece_confidences.push(decision.confidence);
                        ece_correct.push(decision.pseudo_label == t);
                    }
                    epoch_truths.push(truth);

                    let mask = net::draw_mask(&spec, Some(&mut strong_mask_rng));
                    let cache =
                        net::forward_row(&spec, &params, &views.strong, mask.as_deref())?;
                    if decision.selected {
                        terms_u.push(LossTerm {
                            input: views.strong.clone(),
                            target: decision.pseudo_label,
                            weight: w_u,
                            mask,
                        });
                    }
                    strong_probs.push(cache.probs);
                    decisions.push(decision);
                }
                l_u = unsupervised_loss(&decisions, &strong_probs)?;

                iteration_uncertainty
                    .push(batch_variance_sum / batch.unlabelled.len() as f64);
                let batch_ece = if ece_confidences.is_empty() {
                    0.0
                } else {
                    metrics::ece(&ece_confidences, &ece_correct, config.ece_bins)?
                };
                iteration_ece.push(batch_ece);
                epoch_batch_uncertainty
                    .push(*iteration_uncertainty.last().unwrap());
                epoch_batch_ece.push(batch_ece);
                epoch_decisions.extend(decisions.iter().copied());
            }

            let gated_count = terms_u.len();
            let l_final = total_loss(l_s, l_u, config.lambda);
            let breakdown = LossBreakdown {
                l_s,
                l_u,
                l_final,
                gated_count,
            };
            observer.on_iteration(epoch, iteration, &breakdown);

            let step = |err: Error| match err {
                Error::NonFinite { .. } => Error::NonFiniteLoss { epoch, iteration },
                other => other,
            };
            let (_, mut grads) = grad::loss_and_grads(&spec, &params, &terms_s).map_err(step)?;
            if !terms_u.is_empty() && config.lambda != 0.0 {
                let (_, grads_u) =
                    grad::loss_and_grads(&spec, &params, &terms_u).map_err(step)?;
                grads.add_scaled(&grads_u, config.lambda)?;
            }
            if !l_final.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, iteration });
            }
            optim::sgd_nesterov_step(&mut params, &grads, &mut opt).map_err(step)?;
            ema.update(&params)?;
        }

        let val_accuracy = metrics::evaluate_accuracy(&spec, &params, &data.val)?;
        let (pl_precision, pl_coverage) = metrics::pl_stats(&epoch_decisions, &epoch_truths)?;
        let mean = |xs: &[f64]| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        let record = MetricsRecord {
            epoch: epoch + 1,
            val_accuracy,
            target_accuracy: None,
            pl_precision,
            pl_coverage,
            mean_uncertainty: mean(&epoch_batch_uncertainty),
            ece: mean(&epoch_batch_ece),
        };
        observer.on_epoch(&record);
        metrics_out.push(record);
        val_accs.push(val_accuracy);
        epoch_params.push(params.clone());
    }

    let best_epoch = crate::averaging::select_best(&val_accs)?;
    let triple = CheckpointTriple::new(
        epoch_params[best_epoch].clone(),
        params,
        ema.into_shadow(),
    )?;
    Ok(RunResult {
        spec,
        triple,
        metrics: metrics_out,
        epoch_params,
        best_epoch,
        iteration_uncertainty,
        iteration_ece,
    })
}
