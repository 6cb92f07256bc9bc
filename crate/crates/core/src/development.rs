//! Developmental observables: synapse sign census, firing sparsity,
//! probe reconstructions and candidate critical time points (ctps).

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::dataset::DigitCorpus;
use crate::error::{Result, RrnError};
use crate::export::{tile, write_pgm, Csv};
use crate::network::{forward_batch, stack_images, NetworkParams};
use crate::retina::{render_stimulus, Identity, RetinaConfig, Swept, TrialSet};
use crate::seeded_rng;

pub const DEFAULT_FIRING_THRESHOLD: f64 = 0.6;
pub const DEFAULT_CTP_SENSITIVITY: f64 = 3.0;
pub const PROBE_SIZE: usize = 64;

/// Sign census of one weight matrix. Exact zeros fall in neither class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynapseStats {
    pub n_excitatory: usize,
    pub n_inhibitory: usize,
    pub mean_abs_excitatory: f64,
    pub mean_abs_inhibitory: f64,
    /// `f64::INFINITY` when there are no inhibitory weights.
    pub ei_ratio: f64,
}

pub fn synapse_stats(weights: &ArrayView2<f64>) -> SynapseStats {
    let (mut ne, mut ni) = (0usize, 0usize);
    let (mut se, mut si) = (0.0, 0.0);
    for &w in weights {
        if w > 0.0 {
            ne += 1;
            se += w;
        } else if w < 0.0 {
            ni += 1;
            si -= w;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let ei_ratio = if ni == 0 {
        f64::INFINITY
    } else {
        ne as f64 / ni as f64
    };
    SynapseStats {
        n_excitatory: ne,
        n_inhibitory: ni,
        mean_abs_excitatory: mean(se, ne),
        mean_abs_inhibitory: mean(si, ni),
        ei_ratio,
    }
}

/// Per-layer firing statistics over a probe batch, for every layer after
/// the retina (index 0 here is the first hidden layer).
#[derive(Debug, Clone, PartialEq)]
pub struct FiringStats {
    pub threshold: f64,
    pub layer_names: Vec<String>,
    /// Mean activity of each unit over the probe.
    pub unit_means: Vec<Vec<f64>>,
    pub mean_activity: Vec<f64>,
    pub active_fraction: Vec<f64>,
}

fn firing_from_activities(activities: &[Array2<f64>], names: Vec<String>, threshold: f64) -> FiringStats {
    let mut unit_means = Vec::new();
    let mut mean_activity = Vec::new();
    let mut active_fraction = Vec::new();
    for acts in &activities[1..] {
        let means = acts.mean_axis(Axis(0)).expect("non-empty probe").to_vec();
        let n = means.len() as f64;
        mean_activity.push(means.iter().sum::<f64>() / n);
        active_fraction.push(means.iter().filter(|&&m| m > threshold).count() as f64 / n);
        unit_means.push(means);
    }
    FiringStats {
        threshold,
        layer_names: names[1..].to_vec(),
        unit_means,
        mean_activity,
        active_fraction,
    }
}

pub fn firing_stats(params: &NetworkParams, probe: &TrialSet, threshold: f64) -> Result<FiringStats> {
    if probe.is_empty() {
        return Err(RrnError::Argument("probe set is empty".into()));
    }
    let acts = forward_batch(params, stack_images(&probe.stimuli).view())?;
    Ok(firing_from_activities(&acts.activities, params.spec().layer_names(), threshold))
}

/// Fixed probe: one stimulus per slot cycling through the ten digit classes,
/// each with randomly drawn properties, rendered once from `seed`.
pub fn probe_set(corpus: &DigitCorpus, cfg: &RetinaConfig, n: usize, seed: u64) -> Result<TrialSet> {
    let mut rng = seeded_rng(seed);
    let by_digit: Vec<Vec<usize>> = (0..10).map(|d| corpus.indices_of(d)).collect();
    let mut stimuli = Vec::with_capacity(n);
    for k in 0..n {
        let pool = &by_digit[k % 10];
        let index = if pool.is_empty() {
            rng.random_range(0..corpus.len())
        } else {
            pool[rng.random_range(0..pool.len())]
        };
        let props = cfg.ranges.sample(&mut rng, Identity::Digit(corpus.label(index)));
        stimuli.push(render_stimulus(corpus.image(index).view(), props, cfg)?);
    }
    Ok(TrialSet::from_stimuli(stimuli, Swept::None))
}

#[derive(Debug, Clone)]
pub struct DevelopmentSnapshot {
    pub step: usize,
    /// One entry per weight layer, in order.
    pub synapses: Vec<SynapseStats>,
    pub firing: FiringStats,
    /// Reconstructions of the probe stimuli, one row per stimulus.
    pub reconstructions: Array2<f64>,
    pub probe_mse: f64,
}

impl DevelopmentSnapshot {
    /// Interleaved (input, reconstruction) images for PGM export.
    pub fn image_pairs(&self, probe: &TrialSet) -> Vec<(Array2<f64>, Array2<f64>)> {
        probe
            .stimuli
            .iter()
            .zip(self.reconstructions.outer_iter())
            .map(|(s, r)| {
                let w = s.width();
                let rec = r.to_owned().into_shape_with_order((w, w)).expect("square retina");
                (s.pixels.clone(), rec)
            })
            .collect()
    }
}

pub fn capture_snapshot(step: usize, params: &NetworkParams, probe: &TrialSet) -> Result<DevelopmentSnapshot> {
    if probe.is_empty() {
        return Err(RrnError::Argument("probe set is empty".into()));
    }
    let input = stack_images(&probe.stimuli);
    let acts = forward_batch(params, input.view())?;
    let probe_mse = crate::network::batch_mse(&acts.output().view(), &input.view());
    let firing = firing_from_activities(&acts.activities, params.spec().layer_names(), DEFAULT_FIRING_THRESHOLD);
    Ok(DevelopmentSnapshot {
        step,
        synapses: params.layers.iter().map(|l| synapse_stats(&l.weights.view())).collect(),
        firing,
        reconstructions: acts.activities.last().expect("output layer").clone(),
        probe_mse,
    })
}

/// Named scalar series over snapshot steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

/// Every tracked series: per weight layer ei_ratio and mean magnitudes,
/// per activity layer active fraction, and probe MSE.
pub fn tracked_series(snapshots: &[DevelopmentSnapshot], layer_names: &[String]) -> Vec<Series> {
    let mut out = Vec::new();
    let Some(first) = snapshots.first() else {
        return out;
    };
    for l in 0..first.synapses.len() {
        let name = layer_names.get(l + 1).cloned().unwrap_or_else(|| format!("layer{}", l + 1));
        let pick = |f: fn(&SynapseStats) -> f64| snapshots.iter().map(|s| f(&s.synapses[l])).collect::<Vec<_>>();
        out.push(Series {
            name: format!("{name}.ei_ratio"),
            values: pick(|s| s.ei_ratio),
        });
        out.push(Series {
            name: format!("{name}.mean_abs_exc"),
            values: pick(|s| s.mean_abs_excitatory),
        });
        out.push(Series {
            name: format!("{name}.mean_abs_inh"),
            values: pick(|s| s.mean_abs_inhibitory),
        });
    }
    for (l, name) in first.firing.layer_names.iter().enumerate() {
        out.push(Series {
            name: format!("{name}.active_frac"),
            values: snapshots.iter().map(|s| s.firing.active_fraction[l]).collect(),
        });
    }
    out.push(Series {
        name: "probe_mse".into(),
        values: snapshots.iter().map(|s| s.probe_mse).collect(),
    });
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtpCandidate {
    pub step: usize,
    pub series: String,
    pub trigger: String,
}

const SMOOTH: usize = 3;
const TRAIL: usize = 6;
const MIN_HISTORY: usize = 4;

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    (m, v.sqrt())
}

/// Candidate changepoints of one series sampled at `steps`.
///
/// A jump is a first difference that deviates from the trailing mean
/// difference by more than `sensitivity` trailing standard deviations. A
/// slope reversal is a sign flip of the moving-average slope, where a slope
/// only counts as signed once it exceeds `sensitivity` standard errors of
/// the trailing differences.
pub fn series_candidates(steps: &[usize], series: &Series, sensitivity: f64) -> Vec<CtpCandidate> {
    let x = &series.values;
    let mut out = Vec::new();
    if x.len() < 3 || steps.len() != x.len() || x.iter().any(|v| !v.is_finite()) {
        return out;
    }
    let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut last_sign = 0i8;
    for i in MIN_HISTORY.min(d.len())..d.len() {
        let lo = i.saturating_sub(TRAIL);
        let (m, sd) = mean_sd(&d[lo..i]);
        let floor = 1e-9 * m.abs().max(d[lo..i].iter().fold(0.0f64, |a, v| a.max(v.abs())));
        let sd = sd.max(floor);
        let mut flagged = false;
        if (d[i] - m).abs() > sensitivity * sd && sd > 0.0 {
            out.push(CtpCandidate {
                step: steps[i + 1],
                series: series.name.clone(),
                trigger: format!("jump of {:.3e} against trailing sd {:.3e}", d[i] - m, sd),
            });
            flagged = true;
        }
        let slo = (i + 1).saturating_sub(SMOOTH);
        let slope = d[slo..=i].iter().sum::<f64>() / (i + 1 - slo) as f64;
        let threshold = sensitivity * sd / (SMOOTH as f64).sqrt();
        let sign = if slope > threshold {
            1
        } else if slope < -threshold {
            -1
        } else {
            0
        };
        if sign != 0 {
            if last_sign != 0 && sign != last_sign && !flagged {
                out.push(CtpCandidate {
                    step: steps[i + 1],
                    series: series.name.clone(),
                    trigger: format!(
                        "smoothed slope turned {}",
                        if sign > 0 { "positive" } else { "negative" }
                    ),
                });
            }
            last_sign = sign;
        }
    }
    out
}

/// Candidates over every tracked series, sorted by step then series name.
pub fn detect_ctp_candidates(snapshots: &[DevelopmentSnapshot], layer_names: &[String], sensitivity: f64) -> Vec<CtpCandidate> {
    if snapshots.len() < 3 {
        return Vec::new();
    }
    let steps: Vec<usize> = snapshots.iter().map(|s| s.step).collect();
    let mut out: Vec<CtpCandidate> = tracked_series(snapshots, layer_names)
        .iter()
        .flat_map(|s| series_candidates(&steps, s, sensitivity))
        .collect();
    out.sort_by(|a, b| a.step.cmp(&b.step).then_with(|| a.series.cmp(&b.series)));
    out
}

/// One row per (snapshot, weight layer); firing columns refer to the
/// layer the weights project into.
pub fn snapshot_csv(snapshots: &[DevelopmentSnapshot], layer_names: &[String]) -> Csv {
    let mut csv = Csv::with_header(&[
        "step",
        "layer",
        "n_exc",
        "n_inh",
        "mean_abs_exc",
        "mean_abs_inh",
        "active_frac",
        "probe_mse",
    ]);
    for s in snapshots {
        for (l, syn) in s.synapses.iter().enumerate() {
            csv.row([
                s.step.to_string(),
                layer_names.get(l + 1).cloned().unwrap_or_default(),
                syn.n_excitatory.to_string(),
                syn.n_inhibitory.to_string(),
                syn.mean_abs_excitatory.to_string(),
                syn.mean_abs_inhibitory.to_string(),
                s.firing.active_fraction[l].to_string(),
                s.probe_mse.to_string(),
            ]);
        }
    }
    csv
}

/// `snapshot_<step>.pgm`: rows of input/reconstruction pairs.
pub fn write_snapshot_pgm(dir: &Path, snapshot: &DevelopmentSnapshot, probe: &TrialSet) -> Result<std::path::PathBuf> {
    let mut images = Vec::new();
    for (input, rec) in snapshot.image_pairs(probe) {
        images.push(input);
        images.push(rec);
    }
    let path = dir.join(format!("snapshot_{}.pgm", snapshot.step));
    write_pgm(&path, &tile(&images, 16).view())?;
    Ok(path)
}
