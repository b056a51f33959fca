//! Dense feed-forward classifier with one dropout layer.
//!
//! Architecture: `input -> [hidden dense + ReLU]* -> dropout -> dense -> softmax`.
//! The single dropout layer sits between the last hidden activation (the
//! "features") and the classifier head. All math is f64.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

/// Probability floor inside `ln` for cross-entropy.
pub const CE_CLAMP: f64 = 1e-12;

/// Static description of a network: dimensions and dropout rate.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// Feature-extractor widths; may be empty (classifier directly on input).
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    /// Dropout probability in [0, 1).
    pub dropout_rate: f64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be positive"));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("hidden_dims", "widths must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes", "need at least 2 classes"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Width of the feature vector the dropout layer acts on.
    pub fn feature_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }

    /// (name, shape) pairs in forward order: hidden layers, then head.
    /// Weights are [fan_in, fan_out] so that z = x · W + b.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut layout = Vec::new();
        let mut fan_in = self.input_dim;
        for (i, &width) in self.hidden_dims.iter().enumerate() {
            layout.push((format!("hidden{i}.weight"), vec![fan_in, width]));
            layout.push((format!("hidden{i}.bias"), vec![width]));
            fan_in = width;
        }
        layout.push(("head.weight".into(), vec![fan_in, self.num_classes]));
        layout.push(("head.bias".into(), vec![self.num_classes]));
        layout
    }

    /// Check a ParamSet against this spec's layout.
    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        let layout = self.param_layout();
        if params.len() != layout.len() {
            return Err(Error::IncompatibleParams {
                details: format!(
                    "expected {} parameter tensors, found {}",
                    layout.len(),
                    params.len()
                ),
            });
        }
        for ((name, shape), (pname, tensor)) in layout.iter().zip(params.iter()) {
            if name != pname || shape.as_slice() != tensor.shape() {
                return Err(Error::ShapeMismatch {
                    tensor: pname.to_string(),
                    expected: format!("{name} with shape {shape:?}"),
                    actual: format!("{pname} with shape {:?}", tensor.shape()),
                });
            }
        }
        Ok(())
    }
}

/// How a forward pass treats the dropout layer. Train and McDropout both
/// sample fresh masks from the supplied stream; they are separate variants
/// because callers route different streams through them.
pub enum ForwardMode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
    McDropout(&'r mut ChaCha8Rng),
}

impl<'r> ForwardMode<'r> {
    fn rng(&mut self) -> Option<&mut ChaCha8Rng> {
        match self {
            ForwardMode::Eval => None,
            ForwardMode::Train(r) | ForwardMode::McDropout(r) => Some(r),
        }
    }
}

/// Initialize parameters for a spec: He-style normal weights
/// (std = sqrt(2 / fan_in) for hidden, sqrt(1 / fan_in) for the head),
/// zero biases. Deterministic in the stream.
pub fn init_params(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Result<ParamSet> {
    spec.validate()?;
    let mut params = ParamSet::new();
    for (name, shape) in spec.param_layout() {
        let tensor = if shape.len() == 2 {
            let fan_in = shape[0] as f64;
            let std = if name.starts_with("head") {
                (1.0 / fan_in).sqrt()
            } else {
                (2.0 / fan_in).sqrt()
            };
            let normal = Normal::new(0.0, std).expect("finite std");
            let n = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
            Tensor::new(shape, data)?
        } else {
            Tensor::zeros(shape)
        };
        params.insert(name, tensor)?;
    }
    Ok(params)
}

/// Sample a dropout mask for one feature vector, or None when dropout is
/// inactive (p = 0, or Eval mode which passes no rng). `true` = kept.
pub fn draw_mask(spec: &NetworkSpec, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<bool>> {
    let p = spec.dropout_rate;
    let rng = rng?;
    if p == 0.0 {
        return None;
    }
    Some((0..spec.feature_dim()).map(|_| rng.gen::<f64>() >= p).collect())
}

/// Inverted dropout on a feature vector: dropped coordinates are zeroed,
/// survivors scaled by 1/(1-p). `None` mask is the identity.
pub fn apply_mask(features: &[f64], mask: Option<&[bool]>, p: f64) -> Vec<f64> {
    match mask {
        None => features.to_vec(),
        Some(mask) => {
            let scale = 1.0 / (1.0 - p);
            features
                .iter()
                .zip(mask.iter())
                .map(|(&v, &keep)| if keep { v * scale } else { 0.0 })
                .collect()
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// −ln(max(probs[target], 1e-12)).
pub fn cross_entropy(probs: &[f64], target_class: usize) -> Result<f64> {
    if target_class >= probs.len() {
        return Err(Error::ClassOutOfRange {
            class: target_class,
            num_classes: probs.len(),
        });
    }
    Ok(-(probs[target_class].max(CE_CLAMP)).ln())
}

/// Per-example intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct RowCache {
    /// Input row.
    pub input: Vec<f64>,
    /// Post-ReLU activation of each hidden layer, in order.
    pub hidden: Vec<Vec<f64>>,
    /// Feature vector after dropout (what the head saw).
    pub dropped: Vec<f64>,
    /// Softmax output.
    pub probs: Vec<f64>,
}

impl RowCache {
    /// Pre-dropout feature vector (last hidden activation, or the input).
    pub fn features(&self) -> &[f64] {
        self.hidden.last().map(|h| h.as_slice()).unwrap_or(&self.input)
    }
}

fn dense(x: &[f64], weight: &Tensor, bias: &Tensor) -> Vec<f64> {
    let (fan_in, fan_out) = (weight.shape()[0], weight.shape()[1]);
    debug_assert_eq!(x.len(), fan_in);
    let w = weight.data();
    let mut out = bias.data().to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * fan_out..(i + 1) * fan_out];
        for (o, &wij) in out.iter_mut().zip(row.iter()) {
            *o += xi * wij;
        }
    }
    out
}

/// Forward one example with an explicit dropout mask (None = no dropout).
/// This is the deterministic core: everything stochastic happens in the
/// caller's choice of mask.
pub fn forward_row(
    spec: &NetworkSpec,
    params: &ParamSet,
    x: &[f64],
    mask: Option<&[bool]>,
) -> Result<RowCache> {
    if x.len() != spec.input_dim {
        return Err(Error::ShapeMismatch {
            tensor: "input row".into(),
            expected: format!("{} features", spec.input_dim),
            actual: format!("{} features", x.len()),
        });
    }
    spec.check_params(params)?;
    if let Some(m) = mask {
        if m.len() != spec.feature_dim() {
            return Err(Error::ShapeMismatch {
                tensor: "dropout mask".into(),
                expected: format!("{} entries", spec.feature_dim()),
                actual: format!("{} entries", m.len()),
            });
        }
    }

    let mut hidden = Vec::with_capacity(spec.hidden_dims.len());
    let mut current = x.to_vec();
    for i in 0..spec.hidden_dims.len() {
        let w = params.get(&format!("hidden{i}.weight")).unwrap();
        let b = params.get(&format!("hidden{i}.bias")).unwrap();
        let mut z = dense(&current, w, b);
        for v in &mut z {
            *v = v.max(0.0);
        }
        hidden.push(z.clone());
        current = z;
    }

    let dropped = apply_mask(&current, mask, spec.dropout_rate);
    let w = params.get("head.weight").unwrap();
    let b = params.get("head.bias").unwrap();
    let logits = dense(&dropped, w, b);
    let probs = softmax(&logits);

    Ok(RowCache {
        input: x.to_vec(),
        hidden,
        dropped,
        probs,
    })
}

/// Batch forward. Returns (probs [batch, C], features [batch, feature_dim]);
/// features are pre-dropout. Train/McDropout modes draw one independent mask
/// per row from the mode's stream.
pub fn forward(
    spec: &NetworkSpec,
    params: &ParamSet,
    x: &Tensor,
    mut mode: ForwardMode,
) -> Result<(Tensor, Tensor)> {
    if x.shape().len() != 2 || x.shape()[1] != spec.input_dim {
        return Err(Error::ShapeMismatch {
            tensor: "input batch".into(),
            expected: format!("[batch, {}]", spec.input_dim),
            actual: format!("{:?}", x.shape()),
        });
    }
    let batch = x.rows();
    let mut probs = Vec::with_capacity(batch * spec.num_classes);
    let mut features = Vec::with_capacity(batch * spec.feature_dim());
    for r in 0..batch {
        let mask = draw_mask(spec, mode.rng());
        let cache = forward_row(spec, params, x.row(r), mask.as_deref())?;
        probs.extend_from_slice(&cache.probs);
        features.extend_from_slice(cache.features());
    }
    Ok((
        Tensor::new(vec![batch, spec.num_classes], probs)?,
        Tensor::new(vec![batch, spec.feature_dim()], features)?,
    ))
}
