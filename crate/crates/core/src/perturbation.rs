//! Causal probes of single encoding units: modulation sweeps, lesions and
//! the position-invariance check.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::dataset::DigitCorpus;
use crate::error::{Result, RrnError};
use crate::export::Csv;
use crate::network::{decode_batch, encode_batch, stack_images, NetworkParams, ENCODING_WIDTH};
use crate::retina::{render_stimulus, weighted_centroid, Identity, RetinaConfig, RetinaImage, StimulusProps};
use crate::seeded_rng;

/// 11 values uniform on `[0, 1]`.
pub fn default_value_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn check_neuron(neuron_id: usize) -> Result<()> {
    if neuron_id >= ENCODING_WIDTH {
        return Err(RrnError::Argument(format!(
            "neuron {neuron_id} is outside 0..{ENCODING_WIDTH}"
        )));
    }
    Ok(())
}

fn to_images(batch: &Array2<f64>, width: usize) -> Vec<Array2<f64>> {
    batch
        .outer_iter()
        .map(|r| r.to_owned().into_shape_with_order((width, width)).expect("square retina"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ModulationSweep {
    pub neuron_id: usize,
    pub value_grid: Vec<f64>,
    /// The unit's own activity on each stimulus.
    pub optimal_values: Vec<f64>,
    /// Unmodified reconstruction of each stimulus.
    pub baseline: Vec<Array2<f64>>,
    /// `reconstructions[stimulus][value]`.
    pub reconstructions: Vec<Vec<Array2<f64>>>,
}

/// Decode each stimulus's code with one unit overwritten by each grid value.
pub fn modulate(params: &NetworkParams, stimuli: &[RetinaImage], neuron_id: usize, value_grid: &[f64]) -> Result<ModulationSweep> {
    check_neuron(neuron_id)?;
    if let Some(v) = value_grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(RrnError::Argument(format!("modulation value {v} is outside [0, 1]")));
    }
    let width = params.spec().retina_width();
    let codes = encode_batch(params, stack_images(stimuli).view())?;
    let baseline = to_images(&decode_batch(params, codes.view())?, width);
    let mut reconstructions = vec![Vec::with_capacity(value_grid.len()); stimuli.len()];
    for &v in value_grid {
        let mut modified = codes.clone();
        modified.column_mut(neuron_id).fill(v);
        for (s, img) in to_images(&decode_batch(params, modified.view())?, width).into_iter().enumerate() {
            reconstructions[s].push(img);
        }
    }
    Ok(ModulationSweep {
        neuron_id,
        value_grid: value_grid.to_vec(),
        optimal_values: codes.column(neuron_id).to_vec(),
        baseline,
        reconstructions,
    })
}

/// Intensity-weighted mean `(column, row)` of an image.
pub fn centroid(img: &ArrayView2<f64>) -> Result<(f64, f64)> {
    weighted_centroid(img).ok_or(RrnError::UndefinedCentroid)
}

/// Largest horizontal centroid displacement of any modulated
/// reconstruction from its stimulus's unmodified reconstruction.
pub fn position_invariance_check(
    params: &NetworkParams,
    stimuli: &[RetinaImage],
    neuron_id: usize,
    value_grid: &[f64],
) -> Result<f64> {
    let sweep = modulate(params, stimuli, neuron_id, value_grid)?;
    max_centroid_shift(&sweep)
}

pub fn max_centroid_shift(sweep: &ModulationSweep) -> Result<f64> {
    let mut worst = 0.0f64;
    for (base, row) in sweep.baseline.iter().zip(&sweep.reconstructions) {
        let (bx, _) = centroid(&base.view())?;
        for img in row {
            let (cx, _) = centroid(&img.view())?;
            worst = worst.max((cx - bx).abs());
        }
    }
    Ok(worst)
}

/// Mean horizontal centroid shift of reconstructions when the input glyphs
/// move from `base.x` to `base.x + dx` (in retina widths).
pub fn translation_centroid_shift(
    params: &NetworkParams,
    corpus: &DigitCorpus,
    indices: &[usize],
    base: StimulusProps,
    dx: f64,
    cfg: &RetinaConfig,
) -> Result<f64> {
    let render_at = |x: f64| -> Result<Vec<RetinaImage>> {
        indices
            .iter()
            .map(|&i| {
                let mut props = base;
                props.x = x;
                props.identity = Identity::Digit(corpus.label(i));
                render_stimulus(corpus.image(i).view(), props, cfg)
            })
            .collect()
    };
    let width = params.spec().retina_width();
    let recon = |imgs: &[RetinaImage]| -> Result<Vec<Array2<f64>>> {
        let codes = encode_batch(params, stack_images(imgs).view())?;
        Ok(to_images(&decode_batch(params, codes.view())?, width))
    };
    let a = recon(&render_at(base.x)?)?;
    let b = recon(&render_at(base.x + dx)?)?;
    let mut total = 0.0;
    for (ra, rb) in a.iter().zip(&b) {
        total += centroid(&rb.view())?.0 - centroid(&ra.view())?.0;
    }
    Ok(total / indices.len().max(1) as f64)
}

/// Sampled Lipschitz estimate of the decoder (pixel L2 over code L2).
///
/// Pairs are drawn around each stimulus code: one unit is reset to a
/// uniform value in `[0, 1 - step]` and then moved by `step` along that
/// axis, and additionally along a random direction of norm `step`.
pub fn lipschitz_estimate(params: &NetworkParams, stimuli: &[RetinaImage], step: f64, samples_per_unit: usize, seed: u64) -> Result<f64> {
    let codes = encode_batch(params, stack_images(stimuli).view())?;
    let mut rng = seeded_rng(seed);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for code in codes.outer_iter() {
        for unit in 0..codes.ncols() {
            for _ in 0..samples_per_unit {
                let mut p = code.to_owned();
                p[unit] = rng.random_range(0.0..=(1.0 - step));
                let mut q = p.clone();
                q[unit] += step;
                a.push(p.clone());
                b.push(q);
                let dir: Vec<f64> = (0..codes.ncols()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut r = p.clone();
                for (v, d) in r.iter_mut().zip(&dir) {
                    *v += step * d / norm;
                }
                a.push(p);
                b.push(r);
            }
        }
    }
    let stack = |rows: &[ndarray::Array1<f64>]| {
        let mut m = Array2::zeros((rows.len(), codes.ncols()));
        for (mut dst, src) in m.outer_iter_mut().zip(rows) {
            dst.assign(src);
        }
        m
    };
    let (ma, mb) = (stack(&a), stack(&b));
    let (da, db) = (decode_batch(params, ma.view())?, decode_batch(params, mb.view())?);
    let mut best = 0.0f64;
    for i in 0..ma.nrows() {
        let dcode = (&ma.row(i) - &mb.row(i)).mapv(|v| v * v).sum().sqrt();
        let dimg = (&da.row(i) - &db.row(i)).mapv(|v| v * v).sum().sqrt();
        if dcode > 0.0 {
            best = best.max(dimg / dcode);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LesionReport {
    pub neurons: Vec<usize>,
    pub baseline_mse: Vec<f64>,
    pub lesioned_mse: Vec<f64>,
    pub damage: Vec<f64>,
    /// Mean damage per identity tag.
    pub per_identity: BTreeMap<String, f64>,
}

fn identity_tag(id: Identity) -> String {
    match id {
        Identity::Digit(d) => d.to_string(),
        Identity::Novel(k) => k.tag().to_string(),
    }
}

/// Clamp every listed unit to 0 before decoding.
pub fn lesion_units(params: &NetworkParams, stimuli: &[RetinaImage], neurons: &[usize]) -> Result<LesionReport> {
    for &n in neurons {
        check_neuron(n)?;
    }
    let input = stack_images(stimuli);
    let codes = encode_batch(params, input.view())?;
    let base = decode_batch(params, codes.view())?;
    let mut silenced = codes.clone();
    for &n in neurons {
        silenced.column_mut(n).fill(0.0);
    }
    let lesioned = decode_batch(params, silenced.view())?;
    let mse = |out: &Array2<f64>, i: usize| {
        let d = &out.row(i) - &input.row(i);
        d.mapv(|v| v * v).mean().expect("non-empty image")
    };
    let mut report = LesionReport {
        neurons: neurons.to_vec(),
        baseline_mse: Vec::new(),
        lesioned_mse: Vec::new(),
        damage: Vec::new(),
        per_identity: BTreeMap::new(),
    };
    let mut groups: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (i, s) in stimuli.iter().enumerate() {
        let (b, l) = (mse(&base, i), mse(&lesioned, i));
        report.baseline_mse.push(b);
        report.lesioned_mse.push(l);
        report.damage.push(l - b);
        let g = groups.entry(identity_tag(s.props.identity)).or_default();
        g.0 += l - b;
        g.1 += 1;
    }
    report.per_identity = groups.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    Ok(report)
}

pub fn lesion(params: &NetworkParams, stimuli: &[RetinaImage], neuron_id: usize) -> Result<LesionReport> {
    lesion_units(params, stimuli, &[neuron_id])
}

/// One row per (stimulus, value) cell of a sweep.
pub fn sweep_csv(sweep: &ModulationSweep, stimuli: &[RetinaImage]) -> Result<Csv> {
    let mut csv = Csv::with_header(&["stimulus", "value", "mse", "centroid_x", "centroid_y"]);
    for (s, row) in sweep.reconstructions.iter().enumerate() {
        for (img, v) in row.iter().zip(&sweep.value_grid) {
            let mse = (img - &stimuli[s].pixels).mapv(|d| d * d).mean().expect("non-empty");
            let (cx, cy) = centroid(&img.view())?;
            csv.row([s.to_string(), v.to_string(), mse.to_string(), cx.to_string(), cy.to_string()]);
        }
    }
    Ok(csv)
}

pub fn lesion_csv(report: &LesionReport, stimuli: &[RetinaImage]) -> Csv {
    let mut csv = Csv::with_header(&["stimulus", "identity", "baseline_mse", "lesioned_mse", "damage"]);
    for (i, s) in stimuli.iter().enumerate() {
        csv.row([
            i.to_string(),
            identity_tag(s.props.identity),
            report.baseline_mse[i].to_string(),
            report.lesioned_mse[i].to_string(),
            report.damage[i].to_string(),
        ]);
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, LayerSpec};

    fn small() -> (NetworkParams, Vec<RetinaImage>) {
        let spec = LayerSpec::new(vec![64, 48, 32, 48, 64]).unwrap();
        let params = init_params(&spec, 3);
        let mut rng = seeded_rng(8);
        let stimuli = (0..5)
            .map(|k| RetinaImage {
                pixels: Array2::from_shape_simple_fn((8, 8), || rng.random_range(0.0..1.0)),
                props: StimulusProps::canonical(Identity::Digit(k)),
            })
            .collect();
        (params, stimuli)
    }

    #[test]
    fn point_mass_and_uniform_centroids() {
        let mut img = Array2::zeros((32, 32));
        img[[20, 10]] = 0.7;
        assert_eq!(centroid(&img.view()).unwrap(), (10.0, 20.0));
        let uni = Array2::from_elem((32, 32), 0.3);
        let (cx, cy) = centroid(&uni.view()).unwrap();
        assert!((cx - 15.5).abs() < 1e-12 && (cy - 15.5).abs() < 1e-12);
        assert!(matches!(centroid(&Array2::zeros((4, 4)).view()), Err(RrnError::UndefinedCentroid)));
    }

    #[test]
    fn injecting_own_activity_reproduces_baseline_bit_exactly() {
        let (params, stimuli) = small();
        let codes = encode_batch(&params, stack_images(&stimuli).view()).unwrap();
        let own = codes[[0, 7]];
        let sweep = modulate(&params, &stimuli[..1], 7, &[own]).unwrap();
        assert_eq!(sweep.reconstructions[0][0], sweep.baseline[0]);
        assert_eq!(position_invariance_check(&params, &stimuli[..1], 7, &[own]).unwrap(), 0.0);
    }

    #[test]
    fn untrained_check_is_finite() {
        let (params, stimuli) = small();
        let shift = position_invariance_check(&params, &stimuli, 0, &default_value_grid()).unwrap();
        assert!(shift.is_finite());
    }

    #[test]
    fn sweep_shape_and_value_validation() {
        let (params, stimuli) = small();
        let sweep = modulate(&params, &stimuli, 2, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert_eq!(sweep.reconstructions.len(), 5);
        assert!(sweep.reconstructions.iter().all(|r| r.len() == 5));
        assert!(modulate(&params, &stimuli, 2, &[1.5]).is_err());
        assert!(modulate(&params, &stimuli, 32, &[0.5]).is_err());
    }

    #[test]
    fn full_ablation_matches_zero_code_decode() {
        let (params, stimuli) = small();
        let all: Vec<usize> = (0..32).collect();
        let report = lesion_units(&params, &stimuli, &all).unwrap();
        let zero = decode_batch(&params, Array2::zeros((1, 32)).view()).unwrap();
        for (i, s) in stimuli.iter().enumerate() {
            let expect = zero.row(0).iter().zip(s.pixels.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 64.0;
            assert!((report.lesioned_mse[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn silent_unit_lesion_does_no_damage() {
        let (mut params, stimuli) = small();
        // the last encoder layer feeds the code; a huge negative bias pins unit 5 at exactly 0
        params.layers[1].bias[5] = -1e4;
        let report = lesion(&params, &stimuli, 5).unwrap();
        assert!(report.damage.iter().all(|&d| d == 0.0));
    }
}
