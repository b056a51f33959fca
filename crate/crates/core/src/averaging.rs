//! Checkpoint averaging: EMA maintenance, best-epoch selection, and the
//! weighted combination of the best / last / EMA checkpoints, plus the
//! single and pairwise variants used by the ablation.

use crate::error::{Error, Result};
use crate::tensor::ParamSet;

/// Exponential-moving-average shadow of the live parameters.
#[derive(Debug, Clone)]
pub struct EmaState {
    shadow: ParamSet,
    pub decay: f64,
}

impl EmaState {
    /// Shadow starts as a copy of the initial parameters.
    pub fn new(initial: &ParamSet, decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::invalid("decay", "must lie in [0, 1]"));
        }
        Ok(Self {
            shadow: initial.clone(),
            decay,
        })
    }

    /// shadow' = decay * shadow + (1 - decay) * live, after every optimizer
    /// step.
    pub fn update(&mut self, live: &ParamSet) -> Result<()> {
        if !self.shadow.is_compatible(live) {
            return Err(Error::IncompatibleParams {
                details: "ema update: shadow and live parameters differ in layout".into(),
            });
        }
        let d = self.decay;
        for ((_, s), (_, l)) in self.shadow.iter_mut().zip(live.iter()) {
            for (sv, &lv) in s.data_mut().iter_mut().zip(l.data()) {
                *sv = d * *sv + (1.0 - d) * lv;
            }
        }
        Ok(())
    }

    pub fn shadow(&self) -> &ParamSet {
        &self.shadow
    }

    pub fn into_shadow(self) -> ParamSet {
        self.shadow
    }
}

/// The three checkpoints collected by a training run.
#[derive(Debug, Clone)]
pub struct CheckpointTriple {
    pub best: ParamSet,
    pub last: ParamSet,
    pub ema: ParamSet,
}

impl CheckpointTriple {
    pub fn new(best: ParamSet, last: ParamSet, ema: ParamSet) -> Result<Self> {
        if !best.is_compatible(&last) || !best.is_compatible(&ema) {
            return Err(Error::IncompatibleParams {
                details: "checkpoint triple: best/last/ema must share layout".into(),
            });
        }
        Ok(Self { best, last, ema })
    }
}

/// Mixing weights for (best, last, ema). Must be non-negative and sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragingWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl AveragingWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if alpha < 0.0 || beta < 0.0 || gamma < 0.0 {
            return Err(Error::invalid("weights", "must be non-negative"));
        }
        if ((alpha + beta + gamma) - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("weights", "must sum to 1 within 1e-12"));
        }
        Ok(Self { alpha, beta, gamma })
    }

    /// The default: 1/3 each.
    pub fn equal_thirds() -> Self {
        let t = 1.0 / 3.0;
        Self {
            alpha: t,
            beta: t,
            gamma: t,
        }
    }
}

/// Index of the epoch with the highest validation accuracy; ties go to the
/// earliest epoch.
pub fn select_best(val_accuracies: &[f64]) -> Result<usize> {
    if val_accuracies.is_empty() {
        return Err(Error::EmptyInput("validation history"));
    }
    let mut best = 0;
    for (i, &acc) in val_accuracies.iter().enumerate() {
        if acc > val_accuracies[best] {
            best = i;
        }
    }
    Ok(best)
}

/// alpha * best + beta * last + gamma * ema, elementwise.
pub fn model_average(triple: &CheckpointTriple, weights: &AveragingWeights) -> Result<ParamSet> {
    let mut out = triple.best.zeros_like();
    out.add_scaled(&triple.best, weights.alpha)?;
    out.add_scaled(&triple.last, weights.beta)?;
    out.add_scaled(&triple.ema, weights.gamma)?;
    Ok(out)
}

/// The seven checkpoint-combination strategies of the averaging ablation,
/// in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Last,
    Best,
    Ema,
    LastEma,
    LastBest,
    BestEma,
    Avg,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Last,
        Variant::Best,
        Variant::Ema,
        Variant::LastEma,
        Variant::LastBest,
        Variant::BestEma,
        Variant::Avg,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Last => "last",
            Variant::Best => "best",
            Variant::Ema => "ema",
            Variant::LastEma => "last+ema",
            Variant::LastBest => "last+best",
            Variant::BestEma => "best+ema",
            Variant::Avg => "avg",
        }
    }

    /// Members as (use_best, use_last, use_ema).
    fn members(&self) -> (bool, bool, bool) {
        match self {
            Variant::Last => (false, true, false),
            Variant::Best => (true, false, false),
            Variant::Ema => (false, false, true),
            Variant::LastEma => (false, true, true),
            Variant::LastBest => (true, true, false),
            Variant::BestEma => (true, false, true),
            Variant::Avg => (true, true, true),
        }
    }
}

/// Equal-weight average over the variant's member checkpoints.
pub fn variant_average(triple: &CheckpointTriple, variant: Variant) -> Result<ParamSet> {
    let (use_best, use_last, use_ema) = variant.members();
    let count = [use_best, use_last, use_ema].iter().filter(|&&b| b).count();
    debug_assert!(count > 0);
    let w = 1.0 / count as f64;
    let mut out = triple.best.zeros_like();
    if use_best {
        out.add_scaled(&triple.best, w)?;
    }
    if use_last {
        out.add_scaled(&triple.last, w)?;
    }
    if use_ema {
        out.add_scaled(&triple.ema, w)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::new(vec![1], vec![v]).unwrap()).unwrap();
        p
    }

    fn value(p: &ParamSet) -> f64 {
        p.get("w").unwrap().data()[0]
    }

    #[test]
    fn ema_degenerate_decays() {
        let live = scalar(1.0);
        let mut zero_decay = EmaState::new(&scalar(5.0), 0.0).unwrap();
        zero_decay.update(&live).unwrap();
        assert_eq!(value(zero_decay.shadow()), 1.0);

        let mut one_decay = EmaState::new(&scalar(5.0), 1.0).unwrap();
        one_decay.update(&live).unwrap();
        assert_eq!(value(one_decay.shadow()), 5.0);
    }

    #[test]
    fn ema_single_step_direct_formula() {
        let mut s = EmaState::new(&scalar(0.0), 0.9).unwrap();
        s.update(&scalar(1.0)).unwrap();
        assert!((value(s.shadow()) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ema_closed_form_after_k_steps() {
        // With constant live v: shadow_k = v * (1 - d^k) + shadow_0 * d^k.
        let (v, d, s0, k) = (2.5, 0.97, -1.0, 40u32);
        let mut s = EmaState::new(&scalar(s0), d).unwrap();
        let live = scalar(v);
        for _ in 0..k {
            s.update(&live).unwrap();
        }
        let expected = v * (1.0 - d.powi(k as i32)) + s0 * d.powi(k as i32);
        assert!((value(s.shadow()) - expected).abs() < 1e-12);
    }

    #[test]
    fn select_best_rules() {
        assert_eq!(select_best(&[0.6, 0.8, 0.7]).unwrap(), 1);
        assert_eq!(select_best(&[0.4]).unwrap(), 0);
        assert_eq!(select_best(&[0.8, 0.8]).unwrap(), 0);
        assert!(select_best(&[]).is_err());
    }

    #[test]
    fn model_average_examples() {
        let triple =
            CheckpointTriple::new(scalar(0.3), scalar(0.6), scalar(0.9)).unwrap();
        let avg = model_average(&triple, &AveragingWeights::equal_thirds()).unwrap();
        assert!((value(&avg) - 0.6).abs() < 1e-15);

        let best_only = AveragingWeights::new(1.0, 0.0, 0.0).unwrap();
        let avg = model_average(&triple, &best_only).unwrap();
        assert_eq!(value(&avg), 0.3);

        let same = CheckpointTriple::new(scalar(1.7), scalar(1.7), scalar(1.7)).unwrap();
        let avg = model_average(&same, &AveragingWeights::equal_thirds()).unwrap();
        assert!((value(&avg) - 1.7).abs() < 1e-15);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(AveragingWeights::new(0.5, 0.5, 0.5).is_err());
        assert!(AveragingWeights::new(-0.5, 1.0, 0.5).is_err());
        assert!(AveragingWeights::new(0.2, 0.3, 0.5).is_ok());
    }

    #[test]
    fn variant_average_examples() {
        let triple =
            CheckpointTriple::new(scalar(0.2), scalar(0.6), scalar(0.9)).unwrap();
        assert_eq!(value(&variant_average(&triple, Variant::Last).unwrap()), 0.6);
        assert!(
            (value(&variant_average(&triple, Variant::LastBest).unwrap()) - 0.4).abs() < 1e-15
        );
        let same = CheckpointTriple::new(scalar(0.7), scalar(0.7), scalar(0.7)).unwrap();
        assert!(
            (value(&variant_average(&same, Variant::BestEma).unwrap()) - 0.7).abs() < 1e-15
        );
    }

    #[test]
    fn averaging_is_linear_in_each_checkpoint() {
        // A linear functional of the average equals the weighted functional
        // of the parts; with scalar params the identity map is such a
        // functional.
        let (a, b, c) = (1.25, -0.5, 3.0);
        let triple = CheckpointTriple::new(scalar(a), scalar(b), scalar(c)).unwrap();
        let w = AveragingWeights::new(0.2, 0.3, 0.5).unwrap();
        let avg = model_average(&triple, &w).unwrap();
        assert!((value(&avg) - (0.2 * a + 0.3 * b + 0.5 * c)).abs() < 1e-15);
    }

    #[test]
    fn incompatible_checkpoints_rejected() {
        let mut other = ParamSet::new();
        other
            .insert("different", Tensor::new(vec![1], vec![0.0]).unwrap())
            .unwrap();
        assert!(CheckpointTriple::new(scalar(0.0), scalar(0.0), other).is_err());
    }
}
