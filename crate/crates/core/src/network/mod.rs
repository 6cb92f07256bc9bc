//! The dense recognition-reconstruction autoencoder.
//!
//! Weights are stored `fan_in x fan_out` so a batch of row vectors maps
//! through a layer as `X W + b`. Every layer, the reconstruction included,
//! uses the logistic sigmoid.

mod gradcheck;
mod optim;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RrnError};
use crate::retina::RetinaImage;

pub use gradcheck::{gradient_check, relative_error, LayerGradCheck};
pub use optim::{Adam, Optimizer, OptimizerKind, Sgd};
pub use train::{train, MetricLog, StepMetric, StimulusSource, TrainConfig, TrainError, TrainHook};

/// Width of the bottleneck code.
pub const ENCODING_WIDTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Unit counts from retina through the encoding layer back to retina'.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    widths: Vec<usize>,
    activation: Activation,
}

impl LayerSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 3 || widths.len() % 2 == 0 {
            return Err(RrnError::Argument(format!(
                "layer widths must have odd length >= 3, got {}",
                widths.len()
            )));
        }
        let mid = widths.len() / 2;
        if widths[mid] != ENCODING_WIDTH {
            return Err(RrnError::Argument(format!(
                "encoding layer must have {ENCODING_WIDTH} units, got {}",
                widths[mid]
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(RrnError::Argument("layer widths must be positive".into()));
        }
        let n = widths.len();
        if (0..mid).any(|i| widths[i] != widths[n - 1 - i]) {
            return Err(RrnError::Argument(format!(
                "widths {widths:?} are not symmetric about the encoding layer"
            )));
        }
        let side = (widths[0] as f64).sqrt().round() as usize;
        if side * side != widths[0] {
            return Err(RrnError::Argument(format!(
                "retina width {} is not a perfect square",
                widths[0]
            )));
        }
        Ok(Self {
            widths,
            activation: Activation::Sigmoid,
        })
    }

    /// Roughly 4x taper per layer from a `retina x retina` input.
    pub fn standard(retina: usize) -> Result<Self> {
        let p = retina * retina;
        Self::new(vec![p, p / 4, p / 16, p / 64, 32, p / 64, p / 16, p / 4, p])
    }

    /// The 32x32 configuration used for desk-scale runs.
    pub fn desk() -> Self {
        Self::new(vec![1024, 256, 128, 64, 32, 64, 128, 256, 1024]).expect("valid desk spec")
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Index (into activity vectors) of the encoding layer.
    pub fn encoding_index(&self) -> usize {
        self.widths.len() / 2
    }

    pub fn retina_pixels(&self) -> usize {
        self.widths[0]
    }

    pub fn retina_width(&self) -> usize {
        (self.widths[0] as f64).sqrt().round() as usize
    }

    /// Display name of each activity layer: retina, V1.., V1', retina'.
    pub fn layer_names(&self) -> Vec<String> {
        let mid = self.encoding_index();
        let n = self.widths.len();
        (0..n)
            .map(|i| {
                if i == 0 {
                    "retina".to_string()
                } else if i == n - 1 {
                    "retina'".to_string()
                } else if i <= mid {
                    format!("V{i}")
                } else {
                    format!("V{}'", n - 1 - i)
                }
            })
            .collect()
    }
}

/// Weights and bias of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    spec: LayerSpec,
    pub layers: Vec<Layer>,
}

/// Gradient of the loss with respect to every weight and bias.
pub type Gradients = Vec<Layer>;

impl NetworkParams {
    pub fn from_layers(spec: LayerSpec, layers: Vec<Layer>) -> Result<Self> {
        if layers.len() != spec.n_layers() {
            return Err(RrnError::Shape(format!(
                "{} layers for a spec with {}",
                layers.len(),
                spec.n_layers()
            )));
        }
        for (i, (layer, pair)) in layers.iter().zip(spec.widths().windows(2)).enumerate() {
            if layer.weights.dim() != (pair[0], pair[1]) || layer.bias.len() != pair[1] {
                return Err(RrnError::Shape(format!(
                    "layer {i}: expected {}x{} weights, got {:?}",
                    pair[0],
                    pair[1],
                    layer.weights.dim()
                )));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }
}

/// Zero-mean Gaussian weights with Glorot scaling `sqrt(2 / (fan_in + fan_out))`,
/// zero biases.
pub fn init_params(spec: &LayerSpec, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .widths()
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(&mut rng));
            Layer {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    NetworkParams {
        spec: spec.clone(),
        layers,
    }
}

/// Activities of every layer for one stimulus.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    /// `activities[0]` is the retina input, the last entry is retina'.
    pub activities: Vec<Array1<f64>>,
    encoding_index: usize,
}

impl ActivationRecord {
    pub fn encoding(&self) -> &Array1<f64> {
        &self.activities[self.encoding_index]
    }

    pub fn output(&self) -> &Array1<f64> {
        self.activities.last().expect("record has layers")
    }

    pub fn reconstruction(&self) -> Array2<f64> {
        let out = self.output();
        let w = (out.len() as f64).sqrt().round() as usize;
        out.clone().into_shape_with_order((w, w)).expect("square retina")
    }
}

/// Activities for a batch: `activities[l]` is `batch x widths[l]`.
#[derive(Debug, Clone)]
pub struct BatchActivations {
    pub activities: Vec<Array2<f64>>,
}

impl BatchActivations {
    pub fn output(&self) -> &Array2<f64> {
        self.activities.last().expect("at least one layer")
    }

    pub fn record(&self, row: usize, encoding_index: usize) -> ActivationRecord {
        ActivationRecord {
            activities: self.activities.iter().map(|a| a.row(row).to_owned()).collect(),
            encoding_index,
        }
    }
}

fn apply_layer(layer: &Layer, input: ArrayView2<f64>, act: Activation, index: usize) -> Result<Array2<f64>> {
    let mut z = input.dot(&layer.weights);
    z += &layer.bias;
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(RrnError::Numeric {
            layer: index,
            reason: format!("non-finite pre-activation {bad}"),
        });
    }
    z.mapv_inplace(|v| act.apply(v));
    Ok(z)
}

fn run_layers(params: &NetworkParams, input: ArrayView2<f64>, range: std::ops::Range<usize>) -> Result<Vec<Array2<f64>>> {
    let act = params.spec.activation();
    let mut out: Vec<Array2<f64>> = Vec::with_capacity(range.len());
    for l in range {
        let next = {
            let prev = out.last().map(|a| a.view()).unwrap_or(input);
            apply_layer(&params.layers[l], prev, act, l + 1)?
        };
        out.push(next);
    }
    Ok(out)
}

fn check_input_width(params: &NetworkParams, cols: usize) -> Result<()> {
    if cols != params.spec.retina_pixels() {
        return Err(RrnError::Shape(format!(
            "input has {cols} pixels, network expects {}",
            params.spec.retina_pixels()
        )));
    }
    Ok(())
}

/// Encoder half on a batch (`batch x pixels`), returning all encoder activities.
pub fn encode_batch_layers(params: &NetworkParams, input: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
    check_input_width(params, input.ncols())?;
    run_layers(params, input, 0..params.spec.encoding_index())
}

/// The 32-unit codes for a batch of flattened images.
pub fn encode_batch(params: &NetworkParams, input: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(encode_batch_layers(params, input)?.pop().expect("encoder has layers"))
}

/// Decoder half on a batch of codes.
pub fn decode_batch(params: &NetworkParams, codes: ArrayView2<f64>) -> Result<Array2<f64>> {
    if codes.ncols() != ENCODING_WIDTH {
        return Err(RrnError::Argument(format!(
            "encoding has {} entries, expected {ENCODING_WIDTH}",
            codes.ncols()
        )));
    }
    let mid = params.spec.encoding_index();
    Ok(run_layers(params, codes, mid..params.spec.n_layers())?
        .pop()
        .expect("decoder has layers"))
}

fn decode_batch_layers(params: &NetworkParams, codes: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
    let mid = params.spec.encoding_index();
    run_layers(params, codes, mid..params.spec.n_layers())
}

/// Full pass on a batch: the encoder followed by the decoder.
pub fn forward_batch(params: &NetworkParams, input: ArrayView2<f64>) -> Result<BatchActivations> {
    let mut activities = Vec::with_capacity(params.spec.widths().len());
    activities.push(input.to_owned());
    let enc = encode_batch_layers(params, input)?;
    let code = enc.last().expect("encoder has layers").clone();
    activities.extend(enc);
    activities.extend(decode_batch_layers(params, code.view())?);
    Ok(BatchActivations { activities })
}

/// Stack images into a `batch x pixels` matrix.
pub fn stack_images<'a>(images: impl IntoIterator<Item = &'a RetinaImage>) -> Array2<f64> {
    let rows: Vec<&RetinaImage> = images.into_iter().collect();
    let p = rows.first().map(|r| r.pixels.len()).unwrap_or(0);
    let mut out = Array2::zeros((rows.len(), p));
    for (mut dst, img) in out.outer_iter_mut().zip(&rows) {
        dst.assign(&ArrayView1::from(img.as_slice()));
    }
    out
}

/// Forward pass of one stimulus.
pub fn forward(params: &NetworkParams, input: &RetinaImage) -> Result<ActivationRecord> {
    let x = ArrayView2::from_shape((1, input.pixels.len()), input.as_slice())
        .map_err(|e| RrnError::Shape(e.to_string()))?;
    let batch = forward_batch(params, x)?;
    Ok(batch.record(0, params.spec.encoding_index()))
}

/// Decoder-only inference from an injected code.
pub fn decode_from_encoding(params: &NetworkParams, encoding: ArrayView1<f64>) -> Result<RetinaImage> {
    if encoding.len() != ENCODING_WIDTH {
        return Err(RrnError::Argument(format!(
            "encoding has {} entries, expected {ENCODING_WIDTH}",
            encoding.len()
        )));
    }
    let codes = encoding.to_owned().insert_axis(Axis(0));
    let out = decode_batch(params, codes.view())?;
    let w = params.spec.retina_width();
    let pixels = out
        .into_shape_with_order((w, w))
        .map_err(|e| RrnError::Shape(e.to_string()))?;
    Ok(RetinaImage {
        pixels,
        props: crate::retina::StimulusProps::canonical(crate::retina::Identity::Digit(0)),
    })
}

/// Mean squared error over all pixels.
pub fn reconstruction_loss(record: &ActivationRecord, target: &RetinaImage) -> Result<f64> {
    let out = record.output();
    let t = target.as_slice();
    if out.len() != t.len() {
        return Err(RrnError::Shape(format!(
            "reconstruction has {} pixels, target {}",
            out.len(),
            t.len()
        )));
    }
    Ok(out.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t.len() as f64)
}

/// Mean over the batch of per-sample pixel MSE.
pub fn batch_mse(output: &ArrayView2<f64>, target: &ArrayView2<f64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(output).and(target).for_each(|&a, &b| acc += (a - b) * (a - b));
    acc / output.len() as f64
}

/// Backpropagate the batch-mean MSE.
pub fn backward_batch(params: &NetworkParams, acts: &BatchActivations, target: ArrayView2<f64>) -> Gradients {
    let act = params.spec.activation();
    let n_layers = params.spec.n_layers();
    let output = acts.output();
    let scale = 2.0 / output.len() as f64;

    let mut delta = Array2::zeros(output.dim());
    Zip::from(&mut delta)
        .and(output)
        .and(target)
        .for_each(|d, &a, &t| *d = scale * (a - t) * act.derivative_from_output(a));

    let mut grads: Vec<Layer> = Vec::with_capacity(n_layers);
    for l in (0..n_layers).rev() {
        let prev = &acts.activities[l];
        let weights = prev.t().dot(&delta);
        let bias = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut next = delta.dot(&params.layers[l].weights.t());
            Zip::from(&mut next)
                .and(prev)
                .for_each(|d, &a| *d *= act.derivative_from_output(a));
            delta = next;
        }
        grads.push(Layer { weights, bias });
    }
    grads.reverse();
    grads
}

/// Gradient of [`reconstruction_loss`] for one stimulus.
pub fn backward(params: &NetworkParams, record: &ActivationRecord, target: &RetinaImage) -> Result<Gradients> {
    let acts = BatchActivations {
        activities: record.activities.iter().map(|a| a.clone().insert_axis(Axis(0))).collect(),
    };
    if record.output().len() != target.pixels.len() {
        return Err(RrnError::Shape("target does not match reconstruction".into()));
    }
    let t = ArrayView2::from_shape((1, target.pixels.len()), target.as_slice())
        .map_err(|e| RrnError::Shape(e.to_string()))?;
    Ok(backward_batch(params, &acts, t))
}
