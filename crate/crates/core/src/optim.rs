//! SGD with Nesterov momentum.

use crate::error::{Error, Result};
use crate::tensor::ParamSet;

/// Momentum buffers plus hyperparameters. Velocity mirrors the parameter
/// shapes and starts at zero.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    velocity: ParamSet,
    pub lr: f64,
    pub momentum: f64,
}

impl OptimizerState {
    pub fn new(params: &ParamSet, lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid("lr", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid("momentum", "must lie in [0, 1)"));
        }
        Ok(Self {
            velocity: params.zeros_like(),
            lr,
            momentum,
        })
    }

    pub fn velocity(&self) -> &ParamSet {
        &self.velocity
    }
}

/// One Nesterov update, in place:
/// v' = m * v + g;  w' = w - lr * (g + m * v').
pub fn sgd_nesterov_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
) -> Result<()> {
    if !params.is_compatible(grads) || !params.is_compatible(&state.velocity) {
        return Err(Error::IncompatibleParams {
            details: "optimizer step: params, grads, and velocity must share layout".into(),
        });
    }
    let m = state.momentum;
    let lr = state.lr;
    for (((_, w), (_, g)), (_, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.velocity.iter_mut())
    {
        for ((wi, &gi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = m * *vi + gi;
            *wi -= lr * (gi + m * *vi);
        }
    }
    if params.has_non_finite() || state.velocity.has_non_finite() {
        return Err(Error::NonFinite {
            context: "optimizer update".into(),
        });
    }
    Ok(())
}
