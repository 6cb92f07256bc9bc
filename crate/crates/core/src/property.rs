//! What the encoding units represent: property correlations, neuron
//! categories, linear property decoders and the logistic identity readout.

use std::collections::BTreeSet;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::dataset::DigitCorpus;
use crate::error::{Result, RrnError};
use crate::export::Csv;
use crate::network::{encode_batch, encode_batch_layers, stack_images, NetworkParams};
use crate::retina::{render_stimulus, Identity, Property, RetinaConfig, StimulusProps, Swept, TrialSet};
use crate::seeded_rng;
use crate::stats::{pearson, pearson_p_value};

pub const ALPHA: f64 = 0.01;
pub const DEFAULT_L2: f64 = 1e-4;
pub const N_CLASSES: usize = 10;

/// Which layer's units to correlate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayerSelector {
    #[default]
    Encoding,
    /// Activity layer by index (0 is the retina).
    Index(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub layer: usize,
    pub neuron_id: usize,
    pub property: Property,
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
    /// Unit activity had zero variance; reported as r = 0, p = 1.
    pub degenerate: bool,
}

/// Activities of the selected layer, one row per stimulus.
pub fn layer_activities(params: &NetworkParams, trials: &TrialSet, layer: LayerSelector) -> Result<(usize, Array2<f64>)> {
    let input = stack_images(&trials.stimuli);
    let index = match layer {
        LayerSelector::Encoding => params.spec().encoding_index(),
        LayerSelector::Index(i) => i,
    };
    let enc = params.spec().encoding_index();
    if index > enc {
        let acts = crate::network::forward_batch(params, input.view())?;
        let a = acts
            .activities
            .get(index)
            .cloned()
            .ok_or_else(|| RrnError::Argument(format!("layer index {index} out of range")))?;
        return Ok((index, a));
    }
    if index == 0 {
        return Ok((0, input));
    }
    // encoder activities start at the first hidden layer
    let mut acts = encode_batch_layers(params, input.view())?;
    Ok((index, acts.swap_remove(index - 1)))
}

/// Correlate each column of `activities` against `values`.
pub fn correlate_activities(
    activities: &ArrayView2<f64>,
    values: &[f64],
    property: Property,
    layer: usize,
) -> Result<Vec<CorrelationResult>> {
    let n = values.len();
    if n < 3 {
        return Err(RrnError::Argument(format!("correlation needs at least 3 trials, got {n}")));
    }
    if activities.nrows() != n {
        return Err(RrnError::Shape(format!(
            "{} activity rows for {n} property values",
            activities.nrows()
        )));
    }
    Ok(activities
        .axis_iter(Axis(1))
        .enumerate()
        .map(|(neuron_id, col)| {
            let col = col.to_vec();
            match pearson(&col, values) {
                Some(r) => CorrelationResult {
                    layer,
                    neuron_id,
                    property,
                    r,
                    p_value: pearson_p_value(r, n),
                    n,
                    degenerate: false,
                },
                None => CorrelationResult {
                    layer,
                    neuron_id,
                    property,
                    r: 0.0,
                    p_value: 1.0,
                    n,
                    degenerate: true,
                },
            }
        })
        .collect())
}

pub fn correlate(trials: &TrialSet, params: &NetworkParams, layer: LayerSelector) -> Result<Vec<CorrelationResult>> {
    let Swept::Property(property) = trials.swept else {
        return Err(RrnError::Argument("trial set does not sweep a property".into()));
    };
    let (index, acts) = layer_activities(params, trials, layer)?;
    correlate_activities(&acts.view(), &trials.property_values, property, index)
}

/// The unit with the largest |r| (ties to the lower index).
pub fn top_neuron(results: &[CorrelationResult], property: Property) -> Option<&CorrelationResult> {
    results
        .iter()
        .filter(|c| c.property == property)
        .fold(None, |best: Option<&CorrelationResult>, c| match best {
            Some(b) if b.r.abs() >= c.r.abs() => Some(b),
            _ => Some(c),
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronCategoryMap {
    pub alpha: f64,
    /// Per neuron, the properties it is significantly correlated with.
    pub members: Vec<BTreeSet<Property>>,
}

impl NeuronCategoryMap {
    pub fn n_neurons(&self) -> usize {
        self.members.len()
    }

    pub fn neurons_for(&self, p: Property) -> Vec<usize> {
        (0..self.members.len()).filter(|&i| self.members[i].contains(&p)).collect()
    }

    pub fn fraction(&self, p: Property) -> f64 {
        self.neurons_for(p).len() as f64 / self.n_neurons() as f64
    }

    pub fn non_specific(&self) -> Vec<usize> {
        (0..self.members.len()).filter(|&i| self.members[i].is_empty()).collect()
    }

    pub fn non_specific_fraction(&self) -> f64 {
        self.non_specific().len() as f64 / self.n_neurons() as f64
    }
}

/// Membership by `p < alpha`. Every neuron in `0..n_neurons` needs a result
/// for each of x, y, s and r.
pub fn categorize(results: &[CorrelationResult], alpha: f64, n_neurons: usize) -> Result<NeuronCategoryMap> {
    let mut seen = vec![[false; 4]; n_neurons];
    let mut members = vec![BTreeSet::new(); n_neurons];
    for c in results {
        let k = Property::ALL.iter().position(|&p| p == c.property).expect("known property");
        let slot = seen
            .get_mut(c.neuron_id)
            .ok_or_else(|| RrnError::Completeness(format!("neuron {} outside 0..{n_neurons}", c.neuron_id)))?;
        slot[k] = true;
        if c.p_value < alpha {
            members[c.neuron_id].insert(c.property);
        }
    }
    for (neuron, s) in seen.iter().enumerate() {
        for (k, &ok) in s.iter().enumerate() {
            if !ok {
                return Err(RrnError::Completeness(format!(
                    "no result for neuron {neuron}, property {}",
                    Property::ALL[k].tag()
                )));
            }
        }
    }
    Ok(NeuronCategoryMap { alpha, members })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDecoder {
    pub property: Property,
    pub weights: Array1<f64>,
    pub intercept: f64,
}

impl LinearDecoder {
    pub fn predict(&self, encodings: &ArrayView2<f64>) -> Array1<f64> {
        encodings.dot(&self.weights) + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderFit {
    pub decoder: LinearDecoder,
    pub r2_test: f64,
    pub mse_test: f64,
    pub r2_train: f64,
    /// Ratio of extreme singular values of the centered design.
    pub condition_number: f64,
    pub rank_deficient: bool,
}

/// Shuffled 80/20 split of `0..n`.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed));
    let n_train = (n * 4).div_ceil(5);
    let test = idx.split_off(n_train);
    (idx, test)
}

fn rows(m: &ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

/// Least squares with intercept on an 80/20 split. `ridge` adds an L2
/// penalty on the weights (not the intercept); `None` is plain OLS solved
/// as a minimum-norm problem.
pub fn fit_linear_decoder(
    encodings: &ArrayView2<f64>,
    targets: &[f64],
    property: Property,
    split_seed: u64,
    ridge: Option<f64>,
) -> Result<DecoderFit> {
    let n = targets.len();
    if n < 50 {
        return Err(RrnError::Argument(format!("decoder needs at least 50 samples, got {n}")));
    }
    if encodings.nrows() != n {
        return Err(RrnError::Shape(format!("{} encodings for {n} targets", encodings.nrows())));
    }
    let d = encodings.ncols();
    let (train, test) = split_indices(n, split_seed);
    let xt = rows(encodings, &train);
    let yt: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
    let x_mean = xt.mean_axis(Axis(0)).expect("non-empty split");
    let y_mean = yt.iter().sum::<f64>() / yt.len() as f64;

    let a = DMatrix::from_fn(train.len(), d, |r, c| xt[[r, c]] - x_mean[c]);
    let b = DVector::from_iterator(train.len(), yt.iter().map(|y| y - y_mean));
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let tol = s_max * (train.len().max(d) as f64) * f64::EPSILON;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let utb = u.transpose() * &b;
    let lambda = ridge.unwrap_or(0.0);
    let mut coef = DVector::zeros(d);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            rank += 1;
            let scale = s / (s * s + lambda) * utb[k];
            coef += v_t.row(k).transpose() * scale;
        }
    }
    let weights = Array1::from_iter(coef.iter().copied());
    let intercept = y_mean - x_mean.dot(&weights);
    let decoder = LinearDecoder {
        property,
        weights,
        intercept,
    };

    let pred_train = decoder.predict(&xt.view());
    let xs = rows(encodings, &test);
    let ys: Vec<f64> = test.iter().map(|&i| targets[i]).collect();
    let pred_test = decoder.predict(&xs.view());
    Ok(DecoderFit {
        r2_test: crate::stats::r_squared(&ys, pred_test.as_slice().expect("contiguous")),
        mse_test: crate::stats::mse(&ys, pred_test.as_slice().expect("contiguous")),
        r2_train: crate::stats::r_squared(&yt, pred_train.as_slice().expect("contiguous")),
        condition_number: if s_min > 0.0 { s_max / s_min } else { f64::INFINITY },
        rank_deficient: rank < d,
        decoder,
    })
}

/// Multinomial logistic readout.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityClassifier {
    /// `n_classes x n_features`.
    pub weights: Array2<f64>,
    pub intercepts: Array1<f64>,
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

impl IdentityClassifier {
    pub fn probabilities(&self, encodings: &ArrayView2<f64>) -> Array2<f64> {
        let mut logits = encodings.dot(&self.weights.t()) + &self.intercepts;
        softmax_rows(&mut logits);
        logits
    }

    /// Most probable class per row (ties to the lower class).
    pub fn predict(&self, encodings: &ArrayView2<f64>) -> Vec<u8> {
        let logits = encodings.dot(&self.weights.t()) + &self.intercepts;
        logits
            .outer_iter()
            .map(|row| {
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best as u8
            })
            .collect()
    }

    pub fn accuracy(&self, encodings: &ArrayView2<f64>, labels: &[u8]) -> f64 {
        let pred = self.predict(encodings);
        let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
        hits as f64 / labels.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierFit {
    pub classifier: IdentityClassifier,
    pub test_accuracy: f64,
    pub train_accuracy: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

pub const MAX_ITERATIONS: usize = 10_000;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

/// Mean cross-entropy plus `lambda/2 |W|^2`, and its gradient.
fn logistic_objective(
    x: &Array2<f64>,
    onehot: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
    lambda: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let logits = x.dot(&w.t()) + b;
    let mut p = logits.clone();
    softmax_rows(&mut p);
    let mut loss = 0.0;
    for (lrow, orow) in logits.outer_iter().zip(onehot.outer_iter()) {
        let m = lrow.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let lse = m + lrow.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - lrow.dot(&orow);
    }
    loss = loss / n + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let diff = (p - onehot) / n;
    let gw = diff.t().dot(x) + &(w * lambda);
    let gb = diff.sum_axis(Axis(0));
    (loss, gw, gb)
}

/// Gradient descent with backtracking line search on standardized features;
/// the returned coefficients act on the raw features. The penalty applies
/// to the standardized weights.
pub fn fit_identity_classifier(
    encodings: &ArrayView2<f64>,
    labels: &[u8],
    split_seed: u64,
    lambda: f64,
) -> Result<ClassifierFit> {
    let n = labels.len();
    if encodings.nrows() != n {
        return Err(RrnError::Shape(format!("{} encodings for {n} labels", encodings.nrows())));
    }
    if labels.iter().any(|&l| l as usize >= N_CLASSES) {
        return Err(RrnError::Argument("labels must be digits 0..9".into()));
    }
    let (train, test) = split_indices(n, split_seed);
    let mut present = [false; N_CLASSES];
    for &i in &train {
        present[labels[i] as usize] = true;
    }
    if let Some(missing) = present.iter().position(|&p| !p) {
        return Err(RrnError::Stratification(format!(
            "class {missing} is absent from the training split"
        )));
    }
    if n < 200 {
        return Err(RrnError::Argument(format!("classifier needs at least 200 samples, got {n}")));
    }

    let xt = rows(encodings, &train);
    let mean = xt.mean_axis(Axis(0)).expect("non-empty");
    let sd = xt.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    let z = (&xt - &mean) / &sd;
    let mut onehot = Array2::zeros((train.len(), N_CLASSES));
    for (r, &i) in train.iter().enumerate() {
        onehot[[r, labels[i] as usize]] = 1.0;
    }

    let d = encodings.ncols();
    let mut w = Array2::<f64>::zeros((N_CLASSES, d));
    let mut b = Array1::<f64>::zeros(N_CLASSES);
    let (mut loss, mut gw, mut gb) = logistic_objective(&z, &onehot, &w, &b, lambda);
    let mut step = 1.0;
    let mut iterations = 0;
    let grad_norm = |gw: &Array2<f64>, gb: &Array1<f64>| (gw.iter().chain(gb.iter()).map(|v| v * v).sum::<f64>()).sqrt();
    let mut gnorm = grad_norm(&gw, &gb);
    while iterations < MAX_ITERATIONS && gnorm >= GRADIENT_TOLERANCE {
        iterations += 1;
        let g2 = gnorm * gnorm;
        step *= 2.0;
        loop {
            let w_new = &w - &(&gw * step);
            let b_new = &b - &(&gb * step);
            let (l_new, gw_new, gb_new) = logistic_objective(&z, &onehot, &w_new, &b_new, lambda);
            if l_new <= loss - 0.5 * step * g2 || step < 1e-12 {
                w = w_new;
                b = b_new;
                loss = l_new;
                gw = gw_new;
                gb = gb_new;
                break;
            }
            step *= 0.5;
        }
        gnorm = grad_norm(&gw, &gb);
    }
    if !loss.is_finite() {
        return Err(RrnError::Numeric {
            layer: 0,
            reason: "logistic loss is not finite".into(),
        });
    }

    let weights = &w / &sd.view().insert_axis(Axis(0));
    let intercepts = &b - &weights.dot(&mean);
    let classifier = IdentityClassifier { weights, intercepts };
    let train_labels: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
    Ok(ClassifierFit {
        train_accuracy: classifier.accuracy(&xt.view(), &train_labels),
        test_accuracy: classifier.accuracy(&rows(encodings, &test).view(), &test_labels),
        classifier,
        iterations,
        gradient_norm: gnorm,
    })
}

/// One evaluation condition: a property pushed to a value, or none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbCondition {
    pub property: Option<Property>,
    pub value: f64,
}

impl PerturbCondition {
    pub fn baseline() -> Self {
        Self {
            property: None,
            value: 0.0,
        }
    }

    pub fn label(&self) -> String {
        match self.property {
            None => "none".into(),
            Some(p) => format!("{}={}", p.tag(), self.value),
        }
    }

    /// Conditions pushing each property to the upper end of its range.
    pub fn extremes(cfg: &RetinaConfig) -> Vec<Self> {
        let mut out = vec![Self::baseline()];
        for p in Property::ALL {
            out.push(Self {
                property: Some(p),
                value: cfg.ranges.get(p).1,
            });
        }
        out
    }
}

impl FromStr for PerturbCondition {
    type Err = RrnError;

    /// `none` or `<tag>=<value>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(Self::baseline());
        }
        let (tag, value) = s
            .split_once('=')
            .ok_or_else(|| RrnError::Argument(format!("perturbation `{s}` is not <property>=<value>")))?;
        let property: Property = tag.trim().parse()?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| RrnError::Argument(format!("perturbation value `{value}` is not a number")))?;
        Ok(Self {
            property: Some(property),
            value,
        })
    }
}

/// Render corpus images under `base` props (plus one perturbation each).
pub fn render_condition(
    corpus: &DigitCorpus,
    indices: &[usize],
    base: StimulusProps,
    condition: PerturbCondition,
    cfg: &RetinaConfig,
) -> Result<TrialSet> {
    let mut stimuli = Vec::with_capacity(indices.len());
    for &i in indices {
        let mut props = base;
        props.identity = Identity::Digit(corpus.label(i));
        if let Some(p) = condition.property {
            props.set(p, condition.value);
        }
        stimuli.push(render_stimulus(corpus.image(i).view(), props, cfg)?);
    }
    let swept = condition.property.map_or(Swept::None, Swept::Property);
    Ok(TrialSet::from_stimuli(stimuli, swept))
}

/// Classifier accuracy on the given images under each condition.
pub fn perturbation_robustness(
    params: &NetworkParams,
    classifier: &IdentityClassifier,
    corpus: &DigitCorpus,
    indices: &[usize],
    base: StimulusProps,
    conditions: &[PerturbCondition],
    cfg: &RetinaConfig,
) -> Result<Vec<(PerturbCondition, f64)>> {
    let labels: Vec<u8> = indices.iter().map(|&i| corpus.label(i)).collect();
    conditions
        .iter()
        .map(|&c| {
            let set = render_condition(corpus, indices, base, c, cfg)?;
            let enc = encode_batch(params, stack_images(&set.stimuli).view())?;
            Ok((c, classifier.accuracy(&enc.view(), &labels)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCorrelation {
    /// `n_units x 10` point-biserial correlations.
    pub r: Array2<f64>,
    pub p: Array2<f64>,
    pub significant: Array2<bool>,
}

/// Correlation of each unit against each one-vs-rest digit indicator.
pub fn identity_correlation_matrix(encodings: &ArrayView2<f64>, labels: &[u8], alpha: f64) -> Result<IdentityCorrelation> {
    let n = labels.len();
    let mut present = [false; N_CLASSES];
    for &l in labels {
        if let Some(p) = present.get_mut(l as usize) {
            *p = true;
        }
    }
    if let Some(missing) = present.iter().position(|&p| !p) {
        return Err(RrnError::Stratification(format!("class {missing} has no samples")));
    }
    let units = encodings.ncols();
    let mut r = Array2::zeros((units, N_CLASSES));
    let mut p = Array2::ones((units, N_CLASSES));
    for u in 0..units {
        let col = encodings.column(u).to_vec();
        for d in 0..N_CLASSES {
            let ind: Vec<f64> = labels.iter().map(|&l| if l as usize == d { 1.0 } else { 0.0 }).collect();
            if let Some(c) = pearson(&col, &ind) {
                r[[u, d]] = c;
                p[[u, d]] = pearson_p_value(c, n);
            }
        }
    }
    let significant = p.mapv(|v| v < alpha);
    Ok(IdentityCorrelation { r, p, significant })
}

/// Encodings of the stimuli in a trial set.
pub fn encode_trials(params: &NetworkParams, trials: &TrialSet) -> Result<Array2<f64>> {
    encode_batch(params, stack_images(&trials.stimuli).view())
}

pub fn correlations_csv(results: &[CorrelationResult]) -> Csv {
    let mut csv = Csv::with_header(&["layer", "neuron", "property", "r", "p", "n", "degenerate"]);
    for c in results {
        csv.row([
            c.layer.to_string(),
            c.neuron_id.to_string(),
            c.property.tag().to_string(),
            c.r.to_string(),
            c.p_value.to_string(),
            c.n.to_string(),
            c.degenerate.to_string(),
        ]);
    }
    csv
}

pub fn categories_csv(map: &NeuronCategoryMap) -> Csv {
    let mut csv = Csv::with_header(&["neuron", "x", "y", "s", "r", "non_specific"]);
    for (i, m) in map.members.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(Property::ALL.iter().map(|p| u8::from(m.contains(p)).to_string()));
        row.push(u8::from(m.is_empty()).to_string());
        csv.row(row);
    }
    csv
}

pub fn decoders_csv(fits: &[DecoderFit]) -> Csv {
    let mut csv = Csv::with_header(&["property", "r2", "mse", "r2_train", "condition_number"]);
    for f in fits {
        csv.row([
            f.decoder.property.tag().to_string(),
            f.r2_test.to_string(),
            f.mse_test.to_string(),
            f.r2_train.to_string(),
            f.condition_number.to_string(),
        ]);
    }
    csv
}

pub fn accuracy_csv(rows: &[(String, f64)]) -> Csv {
    let mut csv = Csv::with_header(&["condition", "accuracy"]);
    for (label, acc) in rows {
        csv.row([label.clone(), acc.to_string()]);
    }
    csv
}
