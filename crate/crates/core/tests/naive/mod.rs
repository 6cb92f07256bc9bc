//! Deliberately plain reference implementations of the analysis kernels.
#![allow(dead_code)]

/// Sample covariance over the product of sample standard deviations.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let mut ma = 0.0;
    let mut mb = 0.0;
    for i in 0..a.len() {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    cov /= n - 1.0;
    va /= n - 1.0;
    vb /= n - 1.0;
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&v| v == xs[0])
}

/// Pairwise loop; constant rows correlate 0, the diagonal is 1.
pub fn similarity(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = if i == j {
                1.0
            } else if is_constant(&rows[i]) || is_constant(&rows[j]) {
                0.0
            } else {
                pearson(&rows[i], &rows[j]).unwrap_or(0.0)
            };
        }
    }
    out
}

/// `(n_positive, n_negative, mean positive, mean |negative|)`.
pub fn census(ws: &[f64]) -> (usize, usize, f64, f64) {
    let pos: Vec<f64> = ws.iter().copied().filter(|&w| w > 0.0).collect();
    let neg: Vec<f64> = ws.iter().copied().filter(|&w| w < 0.0).map(f64::abs).collect();
    let avg = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    (pos.len(), neg.len(), avg(&pos), avg(&neg))
}

/// Intensity-weighted mean `(column, row)` of a row-major `h x w` image.
pub fn centroid(pixels: &[f64], h: usize, w: usize) -> Option<(f64, f64)> {
    let mut total = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for r in 0..h {
        for c in 0..w {
            let v = pixels[r * w + c];
            total += v;
            cx += c as f64 * v;
            cy += r as f64 * v;
        }
    }
    if total <= 0.0 {
        return None;
    }
    Some((cx / total, cy / total))
}

/// Repeated argmax with ties to the lower index.
pub fn top_k(row: &[f64], k: usize) -> Vec<usize> {
    let mut taken = vec![false; row.len()];
    let mut out = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..row.len() {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if row[i] <= row[b] => {}
                _ => best = Some(i),
            }
        }
        let b = best.expect("k <= len");
        taken[b] = true;
        out.push(b);
    }
    out
}
