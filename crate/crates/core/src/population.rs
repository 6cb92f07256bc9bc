//! Population structure of the encoding layer: similarity matrices over
//! property-by-identity grids, stripe quantification, top-responsive units
//! and favorite images.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::dataset::DigitCorpus;
use crate::error::{Result, RrnError};
use crate::export::Csv;
use crate::retina::{render_stimulus, Identity, Property, RetinaConfig, RetinaImage, StimulusProps};
use crate::seeded_rng;

pub const GRID_LEVELS: usize = 10;
pub const DIGITS_PER_BLOCK: usize = 10;

/// `n_blocks` property levels, each holding digits 0..9 in order.
#[derive(Debug, Clone)]
pub struct StimulusGrid {
    pub property: Property,
    pub levels: Vec<f64>,
    pub n_blocks: usize,
    pub digits_per_block: usize,
    pub stimuli: Vec<RetinaImage>,
}

impl StimulusGrid {
    pub fn block(&self, index: usize) -> usize {
        index / self.digits_per_block
    }

    pub fn identity(&self, index: usize) -> usize {
        index % self.digits_per_block
    }
}

/// `n` equally spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn build_stimulus_grid(
    property: Property,
    corpus: &DigitCorpus,
    fixed: StimulusProps,
    seed: u64,
    cfg: &RetinaConfig,
) -> Result<StimulusGrid> {
    let pools: Vec<Vec<usize>> = (0..DIGITS_PER_BLOCK as u8).map(|d| corpus.indices_of(d)).collect();
    if let Some(missing) = pools.iter().position(Vec::is_empty) {
        return Err(RrnError::Consistency(format!("corpus has no instance of digit {missing}")));
    }
    let (lo, hi) = cfg.ranges.get(property);
    let levels = linspace(lo, hi, GRID_LEVELS);
    let mut rng = seeded_rng(seed);
    let mut stimuli = Vec::with_capacity(GRID_LEVELS * DIGITS_PER_BLOCK);
    for &level in &levels {
        for (digit, pool) in pools.iter().enumerate() {
            let index = pool[rng.random_range(0..pool.len())];
            let mut props = fixed.with(property, level);
            props.identity = Identity::Digit(digit as u8);
            stimuli.push(render_stimulus(corpus.image(index).view(), props, cfg)?);
        }
    }
    Ok(StimulusGrid {
        property,
        levels,
        n_blocks: GRID_LEVELS,
        digits_per_block: DIGITS_PER_BLOCK,
        stimuli,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Array2<f64>,
    /// Rows whose encoding vector had zero variance.
    pub degenerate: Vec<bool>,
}

/// Pairwise Pearson correlations between the rows of `encodings`.
/// Zero-variance rows correlate 0 with every partner; the diagonal is 1.
pub fn similarity_matrix(encodings: &ArrayView2<f64>) -> SimilarityMatrix {
    let n = encodings.nrows();
    let mut z = encodings.to_owned();
    let mut degenerate = vec![false; n];
    for (i, mut row) in z.outer_iter_mut().enumerate() {
        let first = row[0];
        if row.iter().all(|&v| v == first) {
            degenerate[i] = true;
            row.fill(0.0);
            continue;
        }
        let m = row.mean().expect("non-empty row");
        row.mapv_inplace(|v| v - m);
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    let mut values = z.dot(&z.t());
    for i in 0..n {
        values[[i, i]] = 1.0;
        for j in 0..i {
            let v = values[[j, i]].clamp(-1.0, 1.0);
            values[[j, i]] = v;
            values[[i, j]] = v;
        }
    }
    SimilarityMatrix { values, degenerate }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParadiagonalScore {
    /// Mean over pairs with the same identity at different levels.
    pub stripe_strength: f64,
    /// Mean over pairs differing in both identity and level.
    pub background: f64,
}

impl ParadiagonalScore {
    pub fn contrast(&self) -> f64 {
        self.stripe_strength - self.background
    }
}

pub fn paradiagonal_score(matrix: &ArrayView2<f64>, digits_per_block: usize) -> ParadiagonalScore {
    let n = matrix.nrows();
    let (mut ss, mut ns, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let same_id = i % digits_per_block == j % digits_per_block;
            let same_block = i / digits_per_block == j / digits_per_block;
            if same_id {
                ss += matrix[[i, j]];
                ns += 1;
            } else if !same_block {
                sb += matrix[[i, j]];
                nb += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    ParadiagonalScore {
        stripe_strength: mean(ss, ns),
        background: mean(sb, nb),
    }
}

/// Indices of the `k` largest activities per row, ties to the lower index.
pub fn top_responsive(encodings: &ArrayView2<f64>, k: usize) -> Result<Vec<Vec<usize>>> {
    if k > encodings.ncols() {
        return Err(RrnError::Argument(format!(
            "k = {k} exceeds the {} available units",
            encodings.ncols()
        )));
    }
    Ok(encodings
        .outer_iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            idx.truncate(k);
            idx
        })
        .collect())
}

pub const FAVORITE_POOL: usize = 20;

#[derive(Debug, Clone)]
pub struct Favorites {
    pub neuron_id: usize,
    /// Stimulus indices ranked by activity, descending.
    pub top: Vec<usize>,
    /// Pixelwise mean of the top 20 stimuli.
    pub mean_image: Array2<f64>,
}

pub fn favorite_images(encodings: &ArrayView2<f64>, images: &[Array2<f64>], neuron_id: usize, k: usize) -> Result<Favorites> {
    if images.len() < FAVORITE_POOL || encodings.nrows() != images.len() {
        return Err(RrnError::Argument(format!(
            "favorite images need at least {FAVORITE_POOL} stimuli with matching encodings"
        )));
    }
    if neuron_id >= encodings.ncols() {
        return Err(RrnError::Argument(format!("neuron {neuron_id} out of range")));
    }
    let col = encodings.column(neuron_id);
    let mut idx: Vec<usize> = (0..images.len()).collect();
    idx.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
    let mut mean_image = Array2::zeros(images[0].dim());
    for &i in &idx[..FAVORITE_POOL] {
        mean_image += &images[i];
    }
    mean_image /= FAVORITE_POOL as f64;
    idx.truncate(k.min(images.len()));
    Ok(Favorites {
        neuron_id,
        top: idx,
        mean_image,
    })
}

/// Per-unit mean activity of rows grouped by a label, `labels x units`.
pub fn class_means(encodings: &ArrayView2<f64>, labels: &[usize], n_labels: usize) -> Array2<f64> {
    let mut sums = Array2::zeros((n_labels, encodings.ncols()));
    let mut counts = vec![0usize; n_labels];
    for (row, &l) in encodings.outer_iter().zip(labels) {
        let mut s = sums.row_mut(l);
        s += &row;
        counts[l] += 1;
    }
    for (mut s, &c) in sums.axis_iter_mut(Axis(0)).zip(&counts) {
        if c > 0 {
            s /= c as f64;
        }
    }
    sums
}

pub fn top_responsive_csv(top: &[Vec<usize>]) -> Csv {
    let k = top.first().map_or(0, Vec::len);
    let mut header = vec!["stimulus".to_string()];
    header.extend((1..=k).map(|i| format!("rank{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::with_header(&header);
    for (i, t) in top.iter().enumerate() {
        csv.row(std::iter::once(i).chain(t.iter().copied()));
    }
    csv
}
