//! Uncertainty-guided pseudo-label selection.
//!
//! For an unlabelled example's weak view: N Monte-Carlo dropout forward
//! passes give a [N, C] matrix of probability rows; per-class population
//! variance over passes gives V; certainty is kappa = 1 - tanh(V). The gate
//! accepts an example when both max(q) >= tau (confidence) and
//! kappa[argmax(q)] >= eta (certainty) hold, with q taken from a single
//! dropout-free forward pass.

use crate::error::{Error, Result};
use crate::net::{self, ForwardMode, NetworkSpec};
use crate::rng;
use crate::tensor::ParamSet;

/// MC-dropout summary for one example.
#[derive(Debug, Clone)]
pub struct UncertaintyProfile {
    /// N probability rows, one per MC pass.
    pub mc_probs: Vec<Vec<f64>>,
    /// Per-class population variance over passes.
    pub variance: Vec<f64>,
    /// Per-class certainty 1 - tanh(V); in (0, 1], equal to 1 iff V = 0.
    pub certainty: Vec<f64>,
}

impl UncertaintyProfile {
    /// Mean over classes of the per-class variance (the scalar uncertainty
    /// reported per example).
    pub fn mean_variance(&self) -> f64 {
        self.variance.iter().sum::<f64>() / self.variance.len() as f64
    }
}

/// Outcome of gating one example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    /// argmax of the dropout-free prediction q; ties to the lowest index.
    pub pseudo_label: usize,
    /// max(q).
    pub confidence: f64,
    /// kappa at the pseudo-label.
    pub certainty_at_label: f64,
    pub passed_confidence: bool,
    pub passed_certainty: bool,
    /// Conjunction of the two tests.
    pub selected: bool,
}

/// N McDropout-mode forward passes over one weak view. Pass i draws its
/// dropout mask from the stream (base_seed, example_id, i), so results do
/// not depend on evaluation order across examples or passes.
pub fn mc_passes(
    spec: &NetworkSpec,
    params: &ParamSet,
    weak_view: &[f64],
    n: usize,
    base_seed: u64,
    example_id: u64,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid("mc_passes", "need at least one pass"));
    }
    let mut rows = Vec::with_capacity(n);
    for pass in 0..n {
        let mut stream = rng::stream(base_seed, &[rng::tag::MC, example_id, pass as u64]);
        let mut mode = ForwardMode::McDropout(&mut stream);
        let mask = match &mut mode {
            ForwardMode::McDropout(r) => net::draw_mask(spec, Some(r)),
            _ => unreachable!(),
        };
        let cache = net::forward_row(spec, params, weak_view, mask.as_deref())?;
        rows.push(cache.probs);
    }
    Ok(rows)
}

/// Per-class population variance of the MC rows: divide by N, so a single
/// pass yields exactly zero. The mean is computed relative to the first
/// row, which makes identical rows give a variance of exactly 0.0 (and so
/// kappa exactly 1) rather than fp noise.
pub fn predictive_variance(mc_probs: &[Vec<f64>]) -> Vec<f64> {
    let n = mc_probs.len();
    let c = mc_probs[0].len();
    let first = &mc_probs[0];
    let mut mean = vec![0.0; c];
    for row in mc_probs {
        for ((m, &v), &f) in mean.iter_mut().zip(row).zip(first) {
            *m += v - f;
        }
    }
    for (m, &f) in mean.iter_mut().zip(first) {
        *m = f + *m / n as f64;
    }
    let mut var = vec![0.0; c];
    for row in mc_probs {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    for v in &mut var {
        *v /= n as f64;
    }
    var
}

/// Elementwise 1 - tanh(V). Rejects negative variances, which would signal
/// a broken caller.
///
/// For variances of probability values (bounded by 1/4) the result lies in
/// (0, 1]: tanh only saturates to 1.0 in f64 near v = 19, far outside that
/// range.
pub fn certainty(variance: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = variance.iter().find(|&&v| v < 0.0) {
        return Err(Error::invalid(
            "variance",
            format!("negative variance {v} passed to certainty transform"),
        ));
    }
    Ok(variance.iter().map(|&v| 1.0 - v.tanh()).collect())
}

/// Full MC profile for one example.
pub fn profile(
    spec: &NetworkSpec,
    params: &ParamSet,
    weak_view: &[f64],
    n: usize,
    base_seed: u64,
    example_id: u64,
) -> Result<UncertaintyProfile> {
    let mc_probs = mc_passes(spec, params, weak_view, n, base_seed, example_id)?;
    let variance = predictive_variance(&mc_probs);
    let certainty = certainty(&variance)?;
    Ok(UncertaintyProfile {
        mc_probs,
        variance,
        certainty,
    })
}

/// The selection gate: confidence test on q, certainty test on kappa at the
/// pseudo-label, both inclusive. Confidence-only gating is the eta = 0
/// degenerate case (kappa > 0 always).
pub fn upl_gate(q: &[f64], kappa: &[f64], tau: f64, eta: f64) -> GateDecision {
    let pseudo_label = net::argmax(q);
    let confidence = q[pseudo_label];
    let certainty_at_label = kappa[pseudo_label];
    let passed_confidence = confidence >= tau;
    let passed_certainty = certainty_at_label >= eta;
    GateDecision {
        pseudo_label,
        confidence,
        certainty_at_label,
        passed_confidence,
        passed_certainty,
        selected: passed_confidence && passed_certainty,
    }
}
