//! Reverse-mode gradients for weighted cross-entropy losses.
//!
//! Every loss used by training is a weighted sum of per-example
//! cross-entropies, so one engine covers the supervised loss, the
//! unsupervised loss, and their sum. A [`LossTerm`] carries its own dropout
//! mask: masks are sampled by the caller once per iteration, which makes the
//! loss a deterministic function of the parameters and therefore directly
//! comparable against finite differences.

use crate::error::{Error, Result};
use crate::net::{self, NetworkSpec, CE_CLAMP};
use crate::tensor::ParamSet;

/// One weighted cross-entropy contribution.
#[derive(Debug, Clone)]
pub struct LossTerm {
    /// Input row (already augmented by the caller).
    pub input: Vec<f64>,
    /// Target class: a true label or a pseudo-label.
    pub target: usize,
    /// Multiplier applied to this term's cross-entropy.
    pub weight: f64,
    /// Dropout mask for this term's forward pass; None disables dropout.
    pub mask: Option<Vec<bool>>,
}

/// Total loss over the terms.
pub fn loss(spec: &NetworkSpec, params: &ParamSet, terms: &[LossTerm]) -> Result<f64> {
    let mut total = 0.0;
    for term in terms {
        let cache = net::forward_row(spec, params, &term.input, term.mask.as_deref())?;
        total += term.weight * net::cross_entropy(&cache.probs, term.target)?;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "loss".into(),
        });
    }
    Ok(total)
}

/// Total loss and its gradient with respect to every parameter.
///
/// When the cross-entropy clamp is active for a term (target probability at
/// or below the floor), that term's gradient contribution is zero: the
/// clamped loss is locally constant.
pub fn loss_and_grads(
    spec: &NetworkSpec,
    params: &ParamSet,
    terms: &[LossTerm],
) -> Result<(f64, ParamSet)> {
    let mut grads = params.zeros_like();
    let mut total = 0.0;

    for term in terms {
        let cache = net::forward_row(spec, params, &term.input, term.mask.as_deref())?;
        total += term.weight * net::cross_entropy(&cache.probs, term.target)?;
        if cache.probs[term.target] <= CE_CLAMP {
            continue;
        }

        // d(loss)/d(logits) for softmax + cross-entropy.
        let mut dlogits: Vec<f64> = cache
            .probs
            .iter()
            .enumerate()
            .map(|(c, &p)| term.weight * (p - if c == term.target { 1.0 } else { 0.0 }))
            .collect();

        // Head layer.
        let head_w = params.get("head.weight").unwrap();
        let fan_out = spec.num_classes;
        let mut ddropped = vec![0.0; cache.dropped.len()];
        {
            let gw = grads.get_mut("head.weight").unwrap().data_mut();
            for (j, &dj) in cache.dropped.iter().enumerate() {
                for (c, &dl) in dlogits.iter().enumerate() {
                    gw[j * fan_out + c] += dj * dl;
                }
            }
        }
        {
            let gb = grads.get_mut("head.bias").unwrap().data_mut();
            for (c, &dl) in dlogits.iter().enumerate() {
                gb[c] += dl;
            }
        }
        let wdata = head_w.data();
        for (j, d) in ddropped.iter_mut().enumerate() {
            let row = &wdata[j * fan_out..(j + 1) * fan_out];
            *d = row.iter().zip(dlogits.iter()).map(|(w, dl)| w * dl).sum();
        }
        dlogits.clear();

        // Dropout backward: dropped coordinates carry no gradient,
        // survivors carry the inverted-dropout scale.
        let mut dcurrent = match &term.mask {
            None => ddropped,
            Some(mask) => {
                let scale = 1.0 / (1.0 - spec.dropout_rate);
                ddropped
                    .iter()
                    .zip(mask.iter())
                    .map(|(&d, &keep)| if keep { d * scale } else { 0.0 })
                    .collect()
            }
        };

        // Hidden layers in reverse. dcurrent holds d(loss)/d(post-ReLU).
        for i in (0..spec.hidden_dims.len()).rev() {
            let act = &cache.hidden[i];
            let below: &[f64] = if i == 0 { &cache.input } else { &cache.hidden[i - 1] };
            let dz: Vec<f64> = dcurrent
                .iter()
                .zip(act.iter())
                .map(|(&d, &a)| if a > 0.0 { d } else { 0.0 })
                .collect();

            let fan_out = act.len();
            {
                let gw = grads.get_mut(&format!("hidden{i}.weight")).unwrap().data_mut();
                for (j, &bj) in below.iter().enumerate() {
                    if bj == 0.0 {
                        continue;
                    }
                    for (k, &dzk) in dz.iter().enumerate() {
                        gw[j * fan_out + k] += bj * dzk;
                    }
                }
            }
            {
                let gb = grads.get_mut(&format!("hidden{i}.bias")).unwrap().data_mut();
                for (k, &dzk) in dz.iter().enumerate() {
                    gb[k] += dzk;
                }
            }

            let w = params.get(&format!("hidden{i}.weight")).unwrap().data();
            dcurrent = (0..below.len())
                .map(|j| {
                    let row = &w[j * fan_out..(j + 1) * fan_out];
                    row.iter().zip(dz.iter()).map(|(wv, dzk)| wv * dzk).sum()
                })
                .collect();
        }
    }

    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "loss".into(),
        });
    }
    if grads.has_non_finite() {
        return Err(Error::NonFinite {
            context: "gradients".into(),
        });
    }
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;
    use crate::rng;
    use rand::Rng;

    fn spec() -> NetworkSpec {
        NetworkSpec {
            input_dim: 2,
            hidden_dims: vec![4],
            num_classes: 3,
            dropout_rate: 0.5,
        }
    }

    fn random_terms(spec: &NetworkSpec, n: usize, seed: u64, with_masks: bool) -> Vec<LossTerm> {
        let mut r = rng::stream(seed, &[rng::tag::BATCH_LABELLED, 0, 0]);
        (0..n)
            .map(|_| LossTerm {
                input: (0..spec.input_dim).map(|_| r.gen_range(-2.0..2.0)).collect(),
                target: r.gen_range(0..spec.num_classes),
                weight: r.gen_range(0.1..1.5),
                mask: if with_masks {
                    Some((0..spec.feature_dim()).map(|_| r.gen::<f64>() >= 0.5).collect())
                } else {
                    None
                },
            })
            .collect()
    }

    #[test]
    fn dropped_feature_gets_exactly_zero_gradient() {
        let spec = spec();
        let mut init = rng::stream(3, &[rng::tag::INIT]);
        let params = init_params(&spec, &mut init).unwrap();
        // Mask drops feature 0 for every term: its head row and its hidden
        // column receive no gradient at all.
        let mut terms = random_terms(&spec, 5, 9, false);
        for t in &mut terms {
            t.mask = Some(vec![false, true, true, true]);
        }
        let (_, grads) = loss_and_grads(&spec, &params, &terms).unwrap();
        let head = grads.get("head.weight").unwrap();
        for c in 0..spec.num_classes {
            assert_eq!(head.data()[c], 0.0);
        }
        let hidden = grads.get("hidden0.weight").unwrap();
        for j in 0..spec.input_dim {
            assert_eq!(hidden.data()[j * 4], 0.0);
        }
        assert_eq!(grads.get("hidden0.bias").unwrap().data()[0], 0.0);
    }

    #[test]
    fn doubling_weights_doubles_gradients() {
        let spec = spec();
        let mut init = rng::stream(4, &[rng::tag::INIT]);
        let params = init_params(&spec, &mut init).unwrap();
        let terms = random_terms(&spec, 6, 11, true);
        let doubled: Vec<LossTerm> = terms
            .iter()
            .map(|t| LossTerm {
                weight: 2.0 * t.weight,
                ..t.clone()
            })
            .collect();
        let (l1, g1) = loss_and_grads(&spec, &params, &terms).unwrap();
        let (l2, g2) = loss_and_grads(&spec, &params, &doubled).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
        for ((_, a), (_, b)) in g1.iter().zip(g2.iter()) {
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                assert!((y - 2.0 * x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn analytic_matches_finite_differences_smoke() {
        // Full multi-network sweep lives in the integration suite; this is a
        // fast inline check of the same contract.
        let spec = spec();
        let mut init = rng::stream(5, &[rng::tag::INIT]);
        let params = init_params(&spec, &mut init).unwrap();
        let terms = random_terms(&spec, 5, 13, true);
        let (_, grads) = loss_and_grads(&spec, &params, &terms).unwrap();

        let names: Vec<String> = params.names().map(String::from).collect();
        for name in names {
            let len = params.get(&name).unwrap().len();
            for idx in 0..len {
                let h = 1e-5;
                let mut plus = params.clone();
                plus.get_mut(&name).unwrap().data_mut()[idx] += h;
                let mut minus = params.clone();
                minus.get_mut(&name).unwrap().data_mut()[idx] -= h;
                let fd = (loss(&spec, &plus, &terms).unwrap()
                    - loss(&spec, &minus, &terms).unwrap())
                    / (2.0 * h);
                let an = grads.get(&name).unwrap().data()[idx];
                let denom = an.abs().max(fd.abs()).max(1e-5);
                assert!(
                    ((an - fd) / denom).abs() <= 1e-4,
                    "{name}[{idx}]: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn loss_is_deterministic_given_masks() {
        let spec = spec();
        let mut init = rng::stream(6, &[rng::tag::INIT]);
        let params = init_params(&spec, &mut init).unwrap();
        let terms = random_terms(&spec, 4, 17, true);
        let a = loss(&spec, &params, &terms).unwrap();
        let b = loss(&spec, &params, &terms).unwrap();
        assert_eq!(a, b);
    }
}
