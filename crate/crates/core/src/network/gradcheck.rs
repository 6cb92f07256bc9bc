//! Central finite-difference check of the analytic gradient.

use ndarray::{Array2, ArrayView2, Zip};
use rand::seq::index::sample;

use super::{backward_batch, forward_batch, NetworkParams};
use crate::error::{Result, RrnError};
use crate::seeded_rng;

/// Comparison of analytic and numeric derivatives over sampled parameters
/// of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradCheck {
    pub layer: usize,
    pub samples: usize,
    pub max_rel_error: f64,
    pub median_rel_error: f64,
    /// Largest analytic derivative magnitude among the samples.
    pub max_abs_gradient: f64,
}

/// `|a - n| / max(|a|, |n|)`, or 0 when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// `L(a) - L(b)` for two reconstructions of the same target, summed as
/// `(a - b)(a + b - 2t)` to avoid cancelling two nearly equal losses.
fn loss_difference(a: &Array2<f64>, b: &Array2<f64>, target: &ArrayView2<f64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(a).and(b).and(target).for_each(|&a, &b, &t| acc += (a - b) * (a + b - 2.0 * t));
    acc / a.len() as f64
}

/// Perturb `samples_per_layer` distinct weights or biases of every layer by
/// `+-step` and compare the centered difference of the batch MSE on
/// `input` (its own target) with backpropagation.
pub fn gradient_check(
    params: &NetworkParams,
    input: ArrayView2<f64>,
    samples_per_layer: usize,
    step: f64,
    fourth_order: bool,
    seed: u64,
) -> Result<Vec<LayerGradCheck>> {
    if !(step > 0.0) {
        return Err(RrnError::Argument("finite-difference step must be positive".into()));
    }
    let acts = forward_batch(params, input)?;
    let grads = backward_batch(params, &acts, input);
    let mut rng = seeded_rng(seed);
    let mut work = params.clone();
    let mut out = Vec::with_capacity(params.layers.len());
    for (l, g) in grads.iter().enumerate() {
        let n_weights = g.weights.len();
        let total = n_weights + g.bias.len();
        let picks = sample(&mut rng, total, samples_per_layer.min(total));
        let mut errors = Vec::with_capacity(picks.len());
        let mut max_abs = 0.0f64;
        for k in picks {
            let (analytic, original) = if k < n_weights {
                let idx = (k / g.weights.ncols(), k % g.weights.ncols());
                (g.weights[idx], work.layers[l].weights[idx])
            } else {
                (g.bias[k - n_weights], work.layers[l].bias[k - n_weights])
            };
            let mut eval_at = |v: f64| -> Result<Array2<f64>> {
                if k < n_weights {
                    let idx = (k / g.weights.ncols(), k % g.weights.ncols());
                    work.layers[l].weights[idx] = v;
                } else {
                    work.layers[l].bias[k - n_weights] = v;
                }
                Ok(forward_batch(&work, input)?.output().clone())
            };
            let numeric = if fourth_order {
                let p2 = eval_at(original + 2.0 * step)?;
                let p1 = eval_at(original + step)?;
                let m1 = eval_at(original - step)?;
                let m2 = eval_at(original - 2.0 * step)?;
                (8.0 * loss_difference(&p1, &m1, &input) - loss_difference(&p2, &m2, &input)) / (12.0 * step)
            } else {
                let p1 = eval_at(original + step)?;
                let m1 = eval_at(original - step)?;
                loss_difference(&p1, &m1, &input) / (2.0 * step)
            };
            eval_at(original)?;
            max_abs = max_abs.max(analytic.abs());
            errors.push(relative_error(analytic, numeric));
        }
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        out.push(LayerGradCheck {
            layer: l,
            samples: errors.len(),
            max_rel_error: sorted.last().copied().unwrap_or(0.0),
            median_rel_error: sorted.get(sorted.len() / 2).copied().unwrap_or(0.0),
            max_abs_gradient: max_abs,
        });
    }
    Ok(out)
}
