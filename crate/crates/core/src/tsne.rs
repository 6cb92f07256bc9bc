//! Exact t-SNE.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, RrnError};
use crate::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl TsneConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            perplexity: 30.0,
            n_iter: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            seed,
        }
    }
}

pub const MAX_POINTS: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub coords: Array2<f64>,
    /// KL(P || Q) after the last iteration.
    pub kl: f64,
    /// `(iteration, KL)` recorded every 50 iterations and at the end.
    pub kl_trace: Vec<(usize, f64)>,
}

fn squared_distances(x: &ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Row-conditional affinities with each row's bandwidth tuned by bisection
/// so its entropy matches `ln(perplexity)`.
fn conditional_affinities(d: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let n = d.nrows();
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    let mut row = vec![0.0; n];
    for i in 0..n {
        let (mut beta, mut lo, mut hi) = (1.0, f64::NEG_INFINITY, f64::INFINITY);
        // distances are shifted by the row minimum for stability
        let dmin = (0..n).filter(|&j| j != i).map(|j| d[[i, j]]).fold(f64::INFINITY, f64::min);
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                row[j] = if j == i { 0.0 } else { (-(d[[i, j]] - dmin) * beta).exp() };
                sum += row[j];
                weighted += row[j] * (d[[i, j]] - dmin);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            for v in row.iter_mut() {
                *v /= sum;
            }
            let diff = entropy - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
        }
        for j in 0..n {
            p[[i, j]] = row[j];
        }
    }
    p
}

/// Symmetrized joint affinities `(P + P^T) / 2N`, floored at 1e-12.
pub fn joint_affinities(x: &ArrayView2<f64>, perplexity: f64) -> Array2<f64> {
    let n = x.nrows();
    let cond = conditional_affinities(&squared_distances(x), perplexity);
    let mut p = &cond + &cond.t();
    p /= 2.0 * n as f64;
    p.mapv_inplace(|v| v.max(1e-12));
    p
}

fn kl_divergence(p: &Array2<f64>, num: &Array2<f64>, z: f64) -> f64 {
    let n = p.nrows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (num[[i, j]] / z).max(1e-12);
                kl += p[[i, j]] * (p[[i, j]] / q).ln();
            }
        }
    }
    kl
}

pub fn tsne_embed(x: &ArrayView2<f64>, cfg: &TsneConfig) -> Result<Embedding2D> {
    let n = x.nrows();
    if n > MAX_POINTS {
        return Err(RrnError::Argument(format!("exact t-SNE is limited to {MAX_POINTS} points, got {n}")));
    }
    if !(cfg.perplexity > 0.0) || (n as f64) < 3.0 * cfg.perplexity {
        return Err(RrnError::Argument(format!(
            "perplexity {} is infeasible for {n} points (need n >= 3 * perplexity)",
            cfg.perplexity
        )));
    }
    let p = joint_affinities(x, cfg.perplexity);
    let mut rng = seeded_rng(cfg.seed);
    let mut y = Array2::from_shape_simple_fn((n, 2), || 1e-2 * rng.sample::<f64, _>(StandardNormal));
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut num = Array2::<f64>::zeros((n, n));
    let mut grad = Array2::<f64>::zeros((n, 2));
    let mut kl_trace = Vec::new();
    let mut kl = f64::NAN;

    for it in 0..cfg.n_iter {
        let exaggerate = it < cfg.exaggeration_iters;
        let scale = if exaggerate { cfg.early_exaggeration } else { 1.0 };
        let momentum = if exaggerate { 0.5 } else { 0.8 };

        let mut z = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dy0 = y[[i, 0]] - y[[j, 0]];
                let dy1 = y[[i, 1]] - y[[j, 1]];
                let v = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                num[[i, j]] = v;
                num[[j, i]] = v;
                z += 2.0 * v;
            }
        }
        grad.fill(0.0);
        for i in 0..n {
            let (mut g0, mut g1) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = (scale * p[[i, j]] - num[[i, j]] / z) * num[[i, j]];
                g0 += w * (y[[i, 0]] - y[[j, 0]]);
                g1 += w * (y[[i, 1]] - y[[j, 1]]);
            }
            grad[[i, 0]] = 4.0 * g0;
            grad[[i, 1]] = 4.0 * g1;
        }
        if it % 50 == 0 || it + 1 == cfg.n_iter {
            kl = kl_divergence(&p, &num, z);
            kl_trace.push((it, kl));
        }
        for ((g, u), gain) in grad.iter().zip(update.iter_mut()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*u > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(0.01);
            *u = momentum * *u - cfg.learning_rate * *gain * g;
        }
        y += &update;
        let mean = y.mean_axis(ndarray::Axis(0)).expect("non-empty");
        y -= &mean;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(RrnError::Numeric {
                layer: 0,
                reason: format!("t-SNE diverged at iteration {it}"),
            });
        }
    }
    Ok(Embedding2D { coords: y, kl, kl_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::silhouette;
    use ndarray::array;

    #[test]
    fn infeasible_perplexity_is_rejected() {
        let x = Array2::<f64>::zeros((20, 3));
        assert!(matches!(tsne_embed(&x.view(), &TsneConfig::new(1)), Err(RrnError::Argument(_))));
    }

    #[test]
    fn affinity_rows_reach_target_perplexity() {
        let mut rng = seeded_rng(3);
        let x = Array2::from_shape_simple_fn((60, 5), || rng.sample::<f64, _>(StandardNormal));
        let cond = conditional_affinities(&squared_distances(&x.view()), 10.0);
        for row in cond.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            let h: f64 = row.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum();
            assert!((h.exp() - 10.0).abs() < 1e-3, "perplexity {}", h.exp());
        }
    }

    #[test]
    fn equidistant_points_stay_equidistant() {
        let x = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut cfg = TsneConfig::new(2);
        cfg.perplexity = 1.0;
        cfg.n_iter = 500;
        let e = tsne_embed(&x.view(), &cfg).unwrap();
        let d = |i: usize, j: usize| {
            let a = e.coords.row(i);
            let b = e.coords.row(j);
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        };
        let ds = [d(0, 1), d(0, 2), d(1, 2)];
        let mean = ds.iter().sum::<f64>() / 3.0;
        assert!(ds.iter().all(|v| (v - mean).abs() / mean < 0.05), "{ds:?}");
    }

    #[test]
    fn separated_clusters_embed_apart_and_kl_settles() {
        let mut rng = seeded_rng(4);
        let mut x = Array2::zeros((100, 32));
        let mut labels = Vec::new();
        for i in 0..100 {
            let offset = if i < 50 { 0.0 } else { 10.0 };
            labels.push(usize::from(i >= 50));
            for c in 0..32 {
                x[[i, c]] = offset + rng.sample::<f64, _>(StandardNormal);
            }
        }
        let e = tsne_embed(&x.view(), &TsneConfig::new(5)).unwrap();
        let pts: Vec<Vec<f64>> = e.coords.outer_iter().map(|r| r.to_vec()).collect();
        assert!(silhouette(&pts, &labels) > 0.5);
        let at = |it: usize| e.kl_trace.iter().find(|(i, _)| *i == it).unwrap().1;
        assert!(e.kl <= at(300) * 1.01);
        assert!(e.kl >= 0.0);
        let again = tsne_embed(&x.view(), &TsneConfig::new(5)).unwrap();
        assert_eq!(e.coords, again.coords);
    }
}
