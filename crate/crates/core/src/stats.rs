//! Statistics shared by the analysis modules.

use statrs::function::beta::checked_beta_reg;
use statrs::function::erf::erfc;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Pearson correlation by two-pass centering; `None` when either series is
/// constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson needs equal-length series");
    let n = a.len();
    if n < 2 || a.iter().all(|&v| v == a[0]) || b.iter().all(|&v| v == b[0]) {
        return None;
    }
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a Student t statistic.
///
/// Uses the regularized incomplete beta identity
/// `p = I_{df/(df+t^2)}(df/2, 1/2)`; above 10^4 degrees of freedom the
/// normal tail is used instead (the continued fraction converges slowly
/// there and the two agree to well below reporting precision).
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    if df > 1e4 {
        return erfc(t.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    }
    let x = df / (df + t * t);
    match checked_beta_reg(df / 2.0, 0.5, x) {
        Ok(p) => p.clamp(0.0, 1.0),
        Err(_) => erfc(t.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0),
    }
}

/// Significance of a Pearson coefficient over `n` pairs (t-test, n-2 df).
pub fn pearson_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    t_two_sided_p(t, df)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Welch's unequal-variance two-sample t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> WelchResult {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = variance(a) / na;
    let vb = variance(b) / nb;
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        let t = if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY };
        return WelchResult {
            t,
            df: na + nb - 2.0,
            p_value: p,
        };
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    WelchResult {
        t,
        df,
        p_value: t_two_sided_p(t, df),
    }
}

/// Mean silhouette coefficient of `points` (rows) under integer labels.
/// Singleton clusters score 0, per the usual convention.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    assert_eq!(n, labels.len());
    let n_clusters = labels.iter().copied().max().map_or(0, |m| m + 1);
    let sizes = {
        let mut s = vec![0usize; n_clusters];
        for &l in labels {
            s[l] += 1;
        }
        s
    };
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return 0.0;
    }
    let dist = |i: usize, j: usize| -> f64 {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut total = 0.0;
    for i in 0..n {
        if sizes[labels[i]] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; n_clusters];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist(i, j);
            }
        }
        let a = sums[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..n_clusters)
            .filter(|&c| c != labels[i] && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Coefficient of determination of `pred` against `truth`; 0 when `truth`
/// is constant.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> f64 {
    let m = mean(truth);
    let ss_tot: f64 = truth.iter().map(|t| (t - m) * (t - m)).sum();
    if ss_tot == 0.0 {
        return 0.0;
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    1.0 - ss_res / ss_tot
}

pub fn mse(truth: &[f64], pred: &[f64]) -> f64 {
    truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / truth.len().max(1) as f64
}
