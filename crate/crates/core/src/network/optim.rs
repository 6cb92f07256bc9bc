use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Gradients, Layer, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            OptimizerKind::Adam { .. } => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }

    pub fn build(&self, params: &NetworkParams, learning_rate: f64) -> Box<dyn Optimizer> {
        match *self {
            OptimizerKind::Adam { beta1, beta2, eps } => Box::new(Adam::new(params, learning_rate, beta1, beta2, eps)),
            OptimizerKind::Sgd => Box::new(Sgd { learning_rate }),
        }
    }
}

pub trait Optimizer {
    fn step(&mut self, params: &mut NetworkParams, grads: &Gradients);
}

pub struct Sgd {
    pub learning_rate: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut NetworkParams, grads: &Gradients) {
        for (layer, g) in params.layers.iter_mut().zip(grads) {
            layer.weights.scaled_add(-self.learning_rate, &g.weights);
            layer.bias.scaled_add(-self.learning_rate, &g.bias);
        }
    }
}

/// Adam with bias-corrected first and second moments.
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl Adam {
    pub fn new(params: &NetworkParams, learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || {
            params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.weights.nrows(), l.weights.ncols()))
                .collect::<Vec<_>>()
        };
        Self {
            learning_rate,
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

fn adam_update2(w: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>, k: [f64; 4]) {
    let [b1, b2, lr_t, eps] = k;
    Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *w -= lr_t * *m / (v.sqrt() + eps);
    });
}

fn adam_update1(w: &mut Array1<f64>, g: &Array1<f64>, m: &mut Array1<f64>, v: &mut Array1<f64>, k: [f64; 4]) {
    let [b1, b2, lr_t, eps] = k;
    Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *w -= lr_t * *m / (v.sqrt() + eps);
    });
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut NetworkParams, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        // folded bias correction: lr * sqrt(c2) / c1, with eps scaled to match
        let lr_t = self.learning_rate * c2.sqrt() / c1;
        let eps_t = self.eps * c2.sqrt();
        let k = [self.beta1, self.beta2, lr_t, eps_t];
        for (((layer, g), m), v) in params
            .layers
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            adam_update2(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, k);
            adam_update1(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, LayerSpec};

    #[test]
    fn adam_matches_textbook_update_on_one_parameter() {
        let spec = LayerSpec::new(vec![4, 32, 4]).unwrap();
        let mut params = init_params(&spec, 0);
        let w0 = params.layers[0].weights[[0, 0]];
        let mut grads: Gradients = params
            .layers
            .iter()
            .map(|l| Layer::zeros(l.weights.nrows(), l.weights.ncols()))
            .collect();
        let mut adam = Adam::new(&params, 0.01, 0.9, 0.999, 1e-8);
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, w0);
        for t in 1..=5 {
            let g = 0.3 * t as f64 - 0.7;
            grads[0].weights[[0, 0]] = g;
            adam.step(&mut params, &grads);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((params.layers[0].weights[[0, 0]] - w).abs() < 1e-15);
    }
}
