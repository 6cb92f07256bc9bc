//! Stimulus sets and analysis suites shared by the subcommands.
//!
//! Every stimulus set draws its seed from the run seed and a fixed tag, so
//! `analyze` and `perturb` see the same stimuli for the same config.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rrn::dataset::{load_idx, DigitCorpus};
use rrn::development::{capture_snapshot, probe_set, DevelopmentSnapshot};
use rrn::network::{encode_batch, stack_images, NetworkParams};
use rrn::population::{build_stimulus_grid, paradiagonal_score, similarity_matrix, ParadiagonalScore, SimilarityMatrix};
use rrn::property::{
    categorize, correlate, encode_trials, fit_identity_classifier, fit_linear_decoder, identity_correlation_matrix,
    perturbation_robustness, render_condition, split_indices, ClassifierFit, CorrelationResult, DecoderFit,
    IdentityCorrelation, LayerSelector, NeuronCategoryMap, PerturbCondition,
};
use rrn::retina::{sample_trial_set, Identity, Property, RetinaImage, StimulusProps, Swept, TrialSet, TrialSpec};
use rrn::sources::AugmentedDigits;
use rrn::stats::silhouette;
use rrn::tsne::{tsne_embed, Embedding2D, TsneConfig};
use rrn::{seeded_rng, Result, RrnError};

use crate::config::RunConfig;

/// Training images and the disjoint held-out images used for analysis.
#[derive(Debug, Clone)]
pub struct Data {
    pub train: DigitCorpus,
    pub heldout: DigitCorpus,
}

pub fn load_data(cfg: &RunConfig) -> Result<Data> {
    let corpus = load_idx(&cfg.images, &cfg.labels)?;
    let train = corpus.slice(0, cfg.train_count)?;
    let heldout = corpus.slice(cfg.heldout_start.min(corpus.len()), corpus.len())?;
    if train.is_empty() || heldout.is_empty() {
        return Err(RrnError::Consistency(format!(
            "{} images cannot supply {} training images and a held-out set from index {}",
            corpus.len(),
            cfg.train_count,
            cfg.heldout_start
        )));
    }
    Ok(Data { train, heldout })
}

/// Centered, unscaled, unrotated placement.
pub fn canonical() -> StimulusProps {
    StimulusProps::canonical(Identity::Digit(0))
}

/// `n` distinct corpus indices in seeded random order.
pub fn sample_indices(corpus: &DigitCorpus, n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut seeded_rng(seed));
    idx.truncate(n);
    idx
}

/// `n` held-out digits with every property drawn from its range.
pub fn augmented_stimuli(corpus: &DigitCorpus, cfg: &RunConfig, n: usize, tag: &str) -> Result<Vec<RetinaImage>> {
    let mut src = AugmentedDigits::new(corpus, cfg.retina, cfg.sub_seed(tag))?;
    (0..n).map(|_| src.draw()).collect()
}

pub fn property_trials(data: &Data, cfg: &RunConfig, property: Property, n: usize, tag: &str) -> Result<TrialSet> {
    let spec = TrialSpec::new(Swept::Property(property), n, cfg.sub_seed(&format!("{tag}:{property}")));
    sample_trial_set(&data.heldout, &spec, &cfg.retina)
}

pub fn property_correlations(params: &NetworkParams, data: &Data, cfg: &RunConfig, properties: &[Property]) -> Result<Vec<CorrelationResult>> {
    let mut out = Vec::new();
    for &p in properties {
        let trials = property_trials(data, cfg, p, cfg.analysis.corr_trials, "corr")?;
        out.extend(correlate(&trials, params, LayerSelector::Encoding)?);
    }
    Ok(out)
}

pub fn decoder_on(params: &NetworkParams, trials: &TrialSet, property: Property, cfg: &RunConfig) -> Result<DecoderFit> {
    let enc = encode_trials(params, trials)?;
    fit_linear_decoder(
        &enc.view(),
        &trials.property_values,
        property,
        cfg.sub_seed(&format!("decoder-split:{property}")),
        cfg.analysis.ridge,
    )
}

#[derive(Debug, Clone)]
pub struct PropertySuite {
    pub correlations: Vec<CorrelationResult>,
    pub categories: NeuronCategoryMap,
    /// One fit per property, in `Property::ALL` order.
    pub decoders: Vec<DecoderFit>,
}

impl PropertySuite {
    pub fn decoder(&self, p: Property) -> &DecoderFit {
        self.decoders
            .iter()
            .find(|d| d.decoder.property == p)
            .expect("every property is decoded")
    }
}

pub fn property_suite(params: &NetworkParams, data: &Data, cfg: &RunConfig) -> Result<PropertySuite> {
    let correlations = property_correlations(params, data, cfg, &Property::ALL)?;
    let units = params.spec().widths()[params.spec().encoding_index()];
    let categories = categorize(&correlations, cfg.analysis.alpha, units)?;
    let decoders = Property::ALL
        .iter()
        .map(|&p| {
            let trials = property_trials(data, cfg, p, cfg.analysis.decoder_trials, "decoder")?;
            decoder_on(params, &trials, p, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PropertySuite {
        correlations,
        categories,
        decoders,
    })
}

/// Centered held-out digits for the identity readout.
#[derive(Debug, Clone)]
pub struct IdentityProbe {
    pub indices: Vec<usize>,
    pub trials: TrialSet,
    pub labels: Vec<u8>,
}

pub fn identity_probe(data: &Data, cfg: &RunConfig) -> Result<IdentityProbe> {
    let indices = sample_indices(&data.heldout, cfg.analysis.classifier_samples, cfg.sub_seed("identity"));
    let trials = render_condition(&data.heldout, &indices, canonical(), PerturbCondition::baseline(), &cfg.retina)?;
    let labels = indices.iter().map(|&i| data.heldout.label(i)).collect();
    Ok(IdentityProbe { indices, trials, labels })
}

pub fn identity_fit(params: &NetworkParams, probe: &IdentityProbe, cfg: &RunConfig) -> Result<(Array2<f64>, ClassifierFit)> {
    let enc = encode_trials(params, &probe.trials)?;
    let fit = fit_identity_classifier(&enc.view(), &probe.labels, cfg.sub_seed("identity-split"), cfg.analysis.l2)?;
    Ok((enc, fit))
}

#[derive(Debug, Clone)]
pub struct IdentitySuite {
    pub fit: ClassifierFit,
    /// The same readout trained on permuted labels.
    pub shuffled: ClassifierFit,
    /// Held-out accuracy under each configured perturbation.
    pub robustness: Vec<(PerturbCondition, f64)>,
    pub correlation: IdentityCorrelation,
    pub encodings: Array2<f64>,
}

impl IdentitySuite {
    pub fn accuracy_under(&self, label: &str) -> Option<f64> {
        self.robustness.iter().find(|(c, _)| c.label() == label).map(|(_, a)| *a)
    }
}

pub fn identity_suite(params: &NetworkParams, data: &Data, probe: &IdentityProbe, cfg: &RunConfig) -> Result<IdentitySuite> {
    let (encodings, fit) = identity_fit(params, probe, cfg)?;
    let mut permuted = probe.labels.clone();
    permuted.shuffle(&mut seeded_rng(cfg.sub_seed("identity-shuffle")));
    let shuffled = fit_identity_classifier(&encodings.view(), &permuted, cfg.sub_seed("identity-split"), cfg.analysis.l2)?;
    let (_, test) = split_indices(probe.indices.len(), cfg.sub_seed("identity-split"));
    let test_indices: Vec<usize> = test.iter().map(|&i| probe.indices[i]).collect();
    let robustness = perturbation_robustness(
        params,
        &fit.classifier,
        &data.heldout,
        &test_indices,
        canonical(),
        &cfg.analysis.perturbations,
        &cfg.retina,
    )?;
    let correlation = identity_correlation_matrix(&encodings.view(), &probe.labels, cfg.analysis.alpha)?;
    Ok(IdentitySuite {
        fit,
        shuffled,
        robustness,
        correlation,
        encodings,
    })
}

#[derive(Debug, Clone)]
pub struct GridSimilarity {
    pub property: Property,
    pub matrix: SimilarityMatrix,
    pub score: ParadiagonalScore,
}

pub fn similarity_suite(params: &NetworkParams, data: &Data, cfg: &RunConfig) -> Result<Vec<GridSimilarity>> {
    Property::ALL
        .iter()
        .map(|&p| {
            let grid = build_stimulus_grid(p, &data.heldout, canonical(), cfg.sub_seed(&format!("grid:{p}")), &cfg.retina)?;
            let enc = encode_batch(params, stack_images(&grid.stimuli).view())?;
            let matrix = similarity_matrix(&enc.view());
            let score = paradiagonal_score(&matrix.values.view(), grid.digits_per_block);
            Ok(GridSimilarity { property: p, matrix, score })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EmbeddingSuite {
    pub stimuli: Vec<RetinaImage>,
    pub encodings: Array2<f64>,
    pub embedding: Embedding2D,
    /// Silhouette of the embedding under digit labels.
    pub silhouette: f64,
}

pub fn embedding_suite(params: &NetworkParams, stimuli: Vec<RetinaImage>, cfg: &RunConfig) -> Result<EmbeddingSuite> {
    let encodings = encode_batch(params, stack_images(&stimuli).view())?;
    let mut tc = TsneConfig::new(cfg.sub_seed("tsne-init"));
    tc.perplexity = cfg.analysis.perplexity;
    tc.n_iter = cfg.analysis.tsne_iter;
    let embedding = tsne_embed(&encodings.view(), &tc)?;
    let points: Vec<Vec<f64>> = embedding.coords.outer_iter().map(|r| r.to_vec()).collect();
    let labels: Vec<usize> = stimuli
        .iter()
        .map(|s| s.props.identity.digit().map_or(10, usize::from))
        .collect();
    Ok(EmbeddingSuite {
        silhouette: silhouette(&points, &labels),
        stimuli,
        encodings,
        embedding,
    })
}

/// Fixed stimulus sets evaluated at every training snapshot.
#[derive(Debug, Clone)]
pub struct DevelopmentProbes {
    /// Mixed-property digits for reconstruction tracking.
    pub probe: TrialSet,
    /// x-swept digits for the position decoder.
    pub x_trials: TrialSet,
    pub identity: IdentityProbe,
}

impl DevelopmentProbes {
    pub fn new(data: &Data, cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            probe: probe_set(&data.heldout, &cfg.retina, cfg.train.probe_size, cfg.sub_seed("probe"))?,
            x_trials: property_trials(data, cfg, Property::X, cfg.analysis.decoder_trials, "decoder")?,
            identity: identity_probe(data, cfg)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevelopmentMetrics {
    pub step: usize,
    pub probe_mse: f64,
    /// Held-out R² of the linear x decoder.
    pub r2_x: f64,
    /// Held-out accuracy of the identity readout.
    pub identity_accuracy: f64,
}

pub fn development_point(step: usize, params: &NetworkParams, probes: &DevelopmentProbes, cfg: &RunConfig) -> Result<(DevelopmentSnapshot, DevelopmentMetrics)> {
    let snapshot = capture_snapshot(step, params, &probes.probe)?;
    let r2_x = decoder_on(params, &probes.x_trials, Property::X, cfg)?.r2_test;
    let (_, fit) = identity_fit(params, &probes.identity, cfg)?;
    let metrics = DevelopmentMetrics {
        step,
        probe_mse: snapshot.probe_mse,
        r2_x,
        identity_accuracy: fit.test_accuracy,
    };
    Ok((snapshot, metrics))
}

/// First step whose value exceeds `threshold`.
pub fn first_crossing(metrics: &[DevelopmentMetrics], value: impl Fn(&DevelopmentMetrics) -> f64, threshold: f64) -> Option<usize> {
    metrics.iter().find(|m| value(m) > threshold).map(|m| m.step)
}

/// Reference predictors for reconstruction MSE on a probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baselines {
    pub constant_half: f64,
    pub all_zero: f64,
    /// The probe's own pixelwise mean image.
    pub mean_image: f64,
}

pub fn baselines(probe: &TrialSet) -> Baselines {
    let x = stack_images(&probe.stimuli);
    let mse_to = |f: &dyn Fn(usize) -> f64| -> f64 {
        let mut total = 0.0;
        for row in x.outer_iter() {
            for (j, v) in row.iter().enumerate() {
                total += (v - f(j)).powi(2);
            }
        }
        total / x.len() as f64
    };
    let mean = x.mean_axis(Axis(0)).expect("non-empty probe");
    Baselines {
        constant_half: mse_to(&|_| 0.5),
        all_zero: mse_to(&|_| 0.0),
        mean_image: mse_to(&|j| mean[j]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(step: usize, v: f64) -> DevelopmentMetrics {
        DevelopmentMetrics {
            step,
            probe_mse: 0.0,
            r2_x: v,
            identity_accuracy: 0.0,
        }
    }

    #[test]
    fn first_crossing_is_strict() {
        let ms = [m(0, 0.1), m(100, 0.5), m(200, 0.6)];
        assert_eq!(first_crossing(&ms, |m| m.r2_x, 0.5), Some(200));
        assert_eq!(first_crossing(&ms, |m| m.r2_x, 0.9), None);
    }

    #[test]
    fn baselines_of_a_constant_probe() {
        let img = RetinaImage {
            pixels: Array2::from_elem((4, 4), 0.25),
            props: canonical(),
        };
        let b = baselines(&TrialSet::from_stimuli(vec![img.clone(), img], Swept::None));
        assert!((b.constant_half - 0.0625).abs() < 1e-15);
        assert!((b.all_zero - 0.0625).abs() < 1e-15);
        assert_eq!(b.mean_image, 0.0);
    }
}
