//! Learning and forgetting: sequential training phases on novel and known
//! structures, with evaluation on fixed stimulus sets and a paired
//! comparison of synaptic change.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use thiserror::Error;

use crate::checkpoint::check_compatible;
use crate::dataset::DigitCorpus;
use crate::error::{Result, RrnError};
use crate::export::{normalize, tile, Csv};
use crate::glyphs::NovelKind;
use crate::network::{batch_mse, forward_batch, stack_images, train, NetworkParams, TrainConfig, TrainError};
use crate::retina::RetinaConfig;
use crate::sources::{AugmentedDigits, AugmentedNovel, Mixed};
use crate::stats::{mean, welch_t_test, WelchResult};

/// What a phase trains on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseSource {
    NovelOnly(NovelKind),
    DigitsOnly,
    /// Novel with probability `p_novel`, digits otherwise.
    Mixed { kind: NovelKind, p_novel: f64 },
}

impl PhaseSource {
    pub fn tag(&self) -> String {
        match self {
            PhaseSource::NovelOnly(k) => format!("novel_only:{k}"),
            PhaseSource::DigitsOnly => "digits_only".into(),
            PhaseSource::Mixed { kind, p_novel } => format!("mixed:{kind}:{p_novel}"),
        }
    }
}

impl fmt::Display for PhaseSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for PhaseSource {
    type Err = RrnError;

    /// `digits_only`, `novel_only:<kind>` or `mixed:<kind>:<p_novel>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["digits_only"] => Ok(PhaseSource::DigitsOnly),
            ["novel_only", kind] => Ok(PhaseSource::NovelOnly(kind.parse()?)),
            ["mixed", kind, p] => {
                let p_novel: f64 = p
                    .parse()
                    .map_err(|_| RrnError::Argument(format!("mixing probability `{p}` is not a number")))?;
                if !(0.0..=1.0).contains(&p_novel) {
                    return Err(RrnError::Argument(format!("mixing probability {p_novel} outside [0, 1]")));
                }
                Ok(PhaseSource::Mixed {
                    kind: kind.parse()?,
                    p_novel,
                })
            }
            _ => Err(RrnError::Argument(format!("unknown phase source `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumPhase {
    pub name: String,
    pub source: PhaseSource,
    pub n_steps: usize,
}

impl CurriculumPhase {
    pub fn new(name: impl Into<String>, source: PhaseSource, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(RrnError::Argument("a phase needs at least one step".into()));
        }
        Ok(Self {
            name: name.into(),
            source,
            n_steps,
        })
    }
}

/// A fixed, named batch of stimuli, one flattened image per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub name: String,
    pub images: Array2<f64>,
}

impl EvalSet {
    pub fn mse(&self, params: &NetworkParams) -> Result<f64> {
        let acts = forward_batch(params, self.images.view())?;
        Ok(batch_mse(&acts.output().view(), &self.images.view()))
    }
}

/// `n` augmented digits from `corpus`.
pub fn digit_eval_set(name: &str, corpus: &DigitCorpus, cfg: &RetinaConfig, n: usize, seed: u64) -> Result<EvalSet> {
    let mut src = AugmentedDigits::new(corpus, *cfg, seed)?;
    let imgs = (0..n).map(|_| src.draw()).collect::<Result<Vec<_>>>()?;
    Ok(EvalSet {
        name: name.into(),
        images: stack_images(&imgs),
    })
}

/// `n` augmented renderings of one novel structure.
pub fn novel_eval_set(name: &str, kind: NovelKind, corpus: &DigitCorpus, cfg: &RetinaConfig, n: usize, seed: u64) -> Result<EvalSet> {
    let mut src = AugmentedNovel::new(kind, corpus, *cfg, seed)?;
    let imgs = (0..n).map(|_| src.draw()).collect::<Result<Vec<_>>>()?;
    Ok(EvalSet {
        name: name.into(),
        images: stack_images(&imgs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    /// Global step counted from the start of the curriculum.
    pub step: usize,
    pub phase: usize,
    pub set: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CurriculumLog {
    pub set_names: Vec<String>,
    pub phase_names: Vec<String>,
    pub records: Vec<EvalRecord>,
    /// Global step at the start of each phase, then the final step.
    pub boundaries: Vec<usize>,
    /// Parameters at every boundary.
    pub snapshots: Vec<NetworkParams>,
}

impl CurriculumLog {
    /// `(step, mse)` series of one eval set.
    pub fn series(&self, set: usize) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.set == set)
            .map(|r| (r.step, r.mse))
            .collect()
    }

    /// MSE of `set` at exactly `step`, if evaluated.
    pub fn mse_at(&self, set: usize, step: usize) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.set == set && r.step == step)
            .map(|r| r.mse)
    }

    pub fn set_index(&self, name: &str) -> Option<usize> {
        self.set_names.iter().position(|n| n == name)
    }

    pub fn csv(&self) -> Csv {
        let mut csv = Csv::with_header(&["step", "phase", "eval_set", "mse"]);
        for r in &self.records {
            csv.row([
                r.step.to_string(),
                self.phase_names[r.phase].clone(),
                self.set_names[r.set].clone(),
                r.mse.to_string(),
            ]);
        }
        csv
    }
}

#[derive(Debug, Error)]
pub enum CurriculumError {
    /// Training went non-finite; the log up to the failure and the last
    /// finite parameters are preserved.
    #[error("curriculum diverged in phase {phase} at global step {step}")]
    Diverged {
        phase: usize,
        step: usize,
        log: Box<CurriculumLog>,
        last_good: Box<NetworkParams>,
    },
    #[error(transparent)]
    Failed(#[from] RrnError),
}

/// Optimizer settings shared by every phase; each phase starts with fresh
/// optimizer state and its own seed derived from `base.seed`.
pub fn run_curriculum(
    params: NetworkParams,
    phases: &[CurriculumPhase],
    eval_sets: &[EvalSet],
    eval_every: usize,
    base: &TrainConfig,
    corpus: &DigitCorpus,
    cfg: &RetinaConfig,
) -> std::result::Result<(NetworkParams, CurriculumLog), CurriculumError> {
    if eval_every == 0 {
        return Err(RrnError::Argument("eval_every must be at least 1".into()).into());
    }
    let mut log = CurriculumLog {
        set_names: eval_sets.iter().map(|e| e.name.clone()).collect(),
        phase_names: phases.iter().map(|p| p.name.clone()).collect(),
        ..CurriculumLog::default()
    };
    if phases.is_empty() {
        return Ok((params, log));
    }
    let mut params = params;
    let mut offset = 0;
    for (k, phase) in phases.iter().enumerate() {
        log.boundaries.push(offset);
        log.snapshots.push(params.clone());
        let seed = base.seed.wrapping_add(1 + k as u64);
        let mut config = base.clone();
        config.total_steps = phase.n_steps;
        config.seed = seed;
        config.snapshot_schedule = (0..=phase.n_steps).step_by(eval_every).collect();
        config.snapshot_schedule.push(phase.n_steps);

        let mut records = Vec::new();
        let mut hook = |step: usize, p: &NetworkParams| -> Result<()> {
            // a phase's opening state was already logged as the previous end
            if step == 0 && k > 0 {
                return Ok(());
            }
            if records.last().is_some_and(|r: &EvalRecord| r.step == offset + step) {
                return Ok(());
            }
            for (set, e) in eval_sets.iter().enumerate() {
                records.push(EvalRecord {
                    step: offset + step,
                    phase: k,
                    set,
                    mse: e.mse(p)?,
                });
            }
            Ok(())
        };
        let result = match phase.source {
            PhaseSource::DigitsOnly => {
                let mut src = AugmentedDigits::new(corpus, *cfg, seed)?;
                train(params.clone(), &config, &mut src, &mut [&mut hook])
            }
            PhaseSource::NovelOnly(kind) => {
                let mut src = AugmentedNovel::new(kind, corpus, *cfg, seed)?;
                train(params.clone(), &config, &mut src, &mut [&mut hook])
            }
            PhaseSource::Mixed { kind, p_novel } => {
                let novel = AugmentedNovel::new(kind, corpus, *cfg, seed)?;
                let digits = AugmentedDigits::new(corpus, *cfg, seed ^ 0x9e37_79b9)?;
                let mut src = Mixed::new(novel, digits, p_novel, seed.rotate_left(17));
                train(params.clone(), &config, &mut src, &mut [&mut hook])
            }
        };
        match result {
            Ok((p, _)) => {
                params = p;
                log.records.append(&mut records);
            }
            Err(TrainError::Diverged { step, last_good, .. }) => {
                log.records.append(&mut records);
                return Err(CurriculumError::Diverged {
                    phase: k,
                    step: offset + step,
                    log: Box::new(log),
                    last_good,
                });
            }
            Err(TrainError::Failed(e)) => return Err(e.into()),
        }
        offset += phase.n_steps;
    }
    log.boundaries.push(offset);
    log.snapshots.push(params.clone());
    Ok((params, log))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlasticityReport {
    pub layer: usize,
    pub delta_a: Vec<f64>,
    pub delta_b: Vec<f64>,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean_a / mean_b`; `f64::INFINITY` when phase B changed nothing.
    pub ratio: f64,
    pub degenerate: bool,
    pub welch: WelchResult,
}

/// Compare two samples of absolute weight changes.
pub fn compare_deltas(layer: usize, delta_a: Vec<f64>, delta_b: Vec<f64>) -> PlasticityReport {
    let mean_a = mean(&delta_a);
    let mean_b = mean(&delta_b);
    let (ratio, degenerate) = if mean_b == 0.0 {
        (f64::INFINITY, true)
    } else {
        (mean_a / mean_b, false)
    };
    let welch = welch_t_test(&delta_a, &delta_b);
    PlasticityReport {
        layer,
        delta_a,
        delta_b,
        mean_a,
        mean_b,
        ratio,
        degenerate,
        welch,
    }
}

fn abs_delta(before: &NetworkParams, after: &NetworkParams, layer: usize) -> Vec<f64> {
    before.layers[layer]
        .weights
        .iter()
        .zip(after.layers[layer].weights.iter())
        .map(|(a, b)| (b - a).abs())
        .collect()
}

/// Per-synapse `|dw|` of phase A against phase B on weight layer `layer`
/// (0 is retina to V1).
pub fn plasticity_compare(
    before_a: &NetworkParams,
    after_a: &NetworkParams,
    before_b: &NetworkParams,
    after_b: &NetworkParams,
    layer: usize,
) -> Result<PlasticityReport> {
    let spec = before_a.spec();
    for other in [after_a, before_b, after_b] {
        check_compatible(other.spec(), spec)?;
    }
    if layer >= before_a.layers.len() {
        return Err(RrnError::Argument(format!("weight layer {layer} out of range")));
    }
    Ok(compare_deltas(
        layer,
        abs_delta(before_a, after_a, layer),
        abs_delta(before_b, after_b, layer),
    ))
}

/// [`plasticity_compare`] over every weight layer.
pub fn plasticity_compare_all(
    before_a: &NetworkParams,
    after_a: &NetworkParams,
    before_b: &NetworkParams,
    after_b: &NetworkParams,
) -> Result<Vec<PlasticityReport>> {
    (0..before_a.layers.len())
        .map(|l| plasticity_compare(before_a, after_a, before_b, after_b, l))
        .collect()
}

pub fn plasticity_csv(reports: &[PlasticityReport], layer_names: &[String]) -> Csv {
    let mut csv = Csv::with_header(&["layer", "mean_abs_dw_a", "mean_abs_dw_b", "ratio", "t", "df", "p", "degenerate"]);
    for r in reports {
        csv.row([
            layer_names.get(r.layer + 1).cloned().unwrap_or_else(|| r.layer.to_string()),
            r.mean_a.to_string(),
            r.mean_b.to_string(),
            r.ratio.to_string(),
            r.welch.t.to_string(),
            r.welch.df.to_string(),
            r.welch.p_value.to_string(),
            r.degenerate.to_string(),
        ]);
    }
    csv
}

/// `|dw|` of the first 64 units of a layer, each unit's incoming weights
/// laid out as a square tile when the fan-in is a perfect square.
pub fn delta_heatmap(before: &NetworkParams, after: &NetworkParams, layer: usize) -> Array2<f64> {
    let w0 = &before.layers[layer].weights;
    let w1 = &after.layers[layer].weights;
    let delta = (w1 - w0).mapv(f64::abs);
    let (fan_in, fan_out) = delta.dim();
    let units = fan_out.min(64);
    let side = (fan_in as f64).sqrt().round() as usize;
    let hi = delta.iter().fold(0.0f64, |a, &b| a.max(b));
    if side * side == fan_in {
        let tiles: Vec<Array2<f64>> = (0..units)
            .map(|u| {
                let col = delta.column(u).to_owned();
                col.into_shape_with_order((side, side)).expect("square fan-in")
            })
            .collect();
        normalize(&tile(&tiles, 8).view(), 0.0, hi)
    } else {
        normalize(&delta.slice(ndarray::s![.., ..units]), 0.0, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingSummary {
    pub set: String,
    /// MSE at every phase boundary that was evaluated.
    pub boundary_mse: Vec<(usize, f64)>,
    /// Step and value of the lowest MSE.
    pub best_step: usize,
    pub best_mse: f64,
    pub final_mse: f64,
    /// `final - boundary` for each boundary value.
    pub deltas: Vec<f64>,
}

pub fn forgetting_summary(log: &CurriculumLog) -> Vec<ForgettingSummary> {
    (0..log.set_names.len())
        .filter_map(|set| {
            let series = log.series(set);
            let &(_, final_mse) = series.last()?;
            let &(best_step, best_mse) = series
                .iter()
                .fold(None, |best: Option<&(usize, f64)>, e| match best {
                    Some(b) if b.1 <= e.1 => Some(b),
                    _ => Some(e),
                })?;
            let boundary_mse: Vec<(usize, f64)> = log
                .boundaries
                .iter()
                .filter_map(|&b| log.mse_at(set, b).map(|m| (b, m)))
                .collect();
            let deltas = boundary_mse.iter().map(|&(_, m)| final_mse - m).collect();
            Some(ForgettingSummary {
                set: log.set_names[set].clone(),
                boundary_mse,
                best_step,
                best_mse,
                final_mse,
                deltas,
            })
        })
        .collect()
}

pub fn forgetting_csv(summaries: &[ForgettingSummary]) -> Csv {
    let mut csv = Csv::with_header(&["eval_set", "boundary_step", "boundary_mse", "final_minus_boundary", "best_step", "best_mse", "final_mse"]);
    for s in summaries {
        for (&(step, m), d) in s.boundary_mse.iter().zip(&s.deltas) {
            csv.row([
                s.set.clone(),
                step.to_string(),
                m.to_string(),
                d.to_string(),
                s.best_step.to_string(),
                s.best_mse.to_string(),
                s.final_mse.to_string(),
            ]);
        }
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, LayerSpec};
    use crate::seeded_rng;
    use rand::Rng;

    fn log_from(values: &[f64], boundaries: Vec<usize>) -> CurriculumLog {
        CurriculumLog {
            set_names: vec!["a".into()],
            phase_names: vec!["p0".into(), "p1".into()],
            records: values
                .iter()
                .enumerate()
                .map(|(i, &m)| EvalRecord {
                    step: i * 10,
                    phase: 0,
                    set: 0,
                    mse: m,
                })
                .collect(),
            boundaries,
            snapshots: Vec::new(),
        }
    }

    #[test]
    fn monotone_log_has_best_at_end() {
        let s = &forgetting_summary(&log_from(&[0.5, 0.4, 0.3, 0.2], vec![0, 20, 30]))[0];
        assert_eq!((s.best_step, s.best_mse, s.final_mse), (30, 0.2, 0.2));
        assert_eq!(s.boundary_mse, vec![(0, 0.5), (20, 0.3), (30, 0.2)]);
        assert!((s.deltas[0] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn v_shaped_log_has_best_at_vertex() {
        let s = &forgetting_summary(&log_from(&[0.5, 0.3, 0.1, 0.3, 0.6], vec![0, 20, 40]))[0];
        assert_eq!(s.best_step, 20);
        assert!((s.deltas[1] - 0.5).abs() < 1e-15);
    }

    fn spec() -> LayerSpec {
        LayerSpec::new(vec![64, 40, 32, 40, 64]).unwrap()
    }

    #[test]
    fn identical_phases_give_unit_ratio() {
        let a0 = init_params(&spec(), 1);
        let a1 = init_params(&spec(), 2);
        let r = plasticity_compare(&a0, &a1, &a0, &a1, 0).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert!((r.welch.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_change_in_b_is_infinite() {
        let a0 = init_params(&spec(), 1);
        let a1 = init_params(&spec(), 2);
        let r = plasticity_compare(&a0, &a1, &a0, &a0, 0).unwrap();
        assert_eq!(r.ratio, f64::INFINITY);
        assert!(r.degenerate);
    }

    #[test]
    fn swapping_phases_inverts_ratio_and_keeps_p() {
        let p = [1, 2, 3, 4].map(|s| init_params(&spec(), s));
        let ab = plasticity_compare(&p[0], &p[1], &p[2], &p[3], 1).unwrap();
        let ba = plasticity_compare(&p[2], &p[3], &p[0], &p[1], 1).unwrap();
        assert!((ab.ratio * ba.ratio - 1.0).abs() < 1e-12);
        assert!((ab.welch.p_value - ba.welch.p_value).abs() < 1e-15);
    }

    #[test]
    fn mismatched_specs_are_shape_errors() {
        let a = init_params(&spec(), 1);
        let b = init_params(&LayerSpec::new(vec![64, 48, 32, 48, 64]).unwrap(), 1);
        assert!(matches!(plasticity_compare(&a, &a, &a, &b, 0), Err(RrnError::Shape(_))));
    }

    #[test]
    fn constructed_ratio_is_recovered() {
        let mut rng = seeded_rng(11);
        let n = 1_000_000;
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| 2.5 * rng.random_range(0.0..1.0)).collect();
        let r = compare_deltas(0, a, b);
        assert!((2.4..=2.6).contains(&r.ratio), "{}", r.ratio);
        assert!(r.welch.p_value < 1e-40);
    }

    #[test]
    fn phase_source_tags_round_trip() {
        for s in ["digits_only", "novel_only:symbol_x", "mixed:solid_square:0.5"] {
            assert_eq!(s.parse::<PhaseSource>().unwrap().tag(), s);
        }
        assert!("novel_only:blob".parse::<PhaseSource>().is_err());
    }
}
