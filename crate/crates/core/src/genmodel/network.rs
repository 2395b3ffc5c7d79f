//! Fully connected SiLU network with hand-written backpropagation and Adam.
//!
//! Activations are stored column-per-sample: a batch is a
//! `features × batch` matrix.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    fn zeros(input: usize, output: usize) -> Self {
        Self { weight: DMatrix::zeros(output, input), bias: DVector::zeros(output) }
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Hidden layers use SiLU; the output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreNetwork {
    layers: Vec<Layer>,
}

/// Per-layer parameter gradients, shaped like the network.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl ScoreNetwork {
    /// Scaled Gaussian weights (`1/√fan_in`), zero biases, and a zero output
    /// layer so an untrained network predicts no noise.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, rng: &mut R) -> Result<Self> {
        if input == 0 || output == 0 || hidden.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let widths: Vec<usize> = std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect();
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let mut layer = Layer::zeros(w[0], w[1]);
                if i < last {
                    let scale = 1.0 / (w[0] as f64).sqrt();
                    layer.weight.iter_mut().for_each(|x| *x = scale * rng.sample::<f64, _>(StandardNormal));
                }
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].weight.nrows() != pair[1].weight.ncols() {
                return Err(Error::LengthMismatch { expected: pair[0].weight.nrows(), found: pair[1].weight.ncols() });
            }
        }
        if let Some(l) = layers.iter().find(|l| l.bias.len() != l.weight.nrows()) {
            return Err(Error::LengthMismatch { expected: l.weight.nrows(), found: l.bias.len() });
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weight.nrows()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.weight.nrows()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// All parameters, layer by layer: weights column-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch { expected: self.param_count(), found: params.len() });
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weight.len());
            l.weight.as_mut_slice().copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.as_mut_slice().copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    fn affine(layer: &Layer, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &layer.weight * input;
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        z
    }

    pub fn forward(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let last = self.layers.len() - 1;
        let mut a = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            a = Self::affine(layer, &a);
            if i < last {
                a.apply(|x| *x = silu(*x));
            }
        }
        a
    }

    /// Mean over the batch of `‖output - target‖²`, and its gradient.
    pub fn loss_and_grad(&self, input: &DMatrix<f64>, target: &DMatrix<f64>) -> (f64, Gradients) {
        let last = self.layers.len() - 1;
        let batch = input.ncols() as f64;
        // Layer inputs and pre-activations.
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut a = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &a);
            inputs.push(a);
            if i < last {
                a = z.map(silu);
                pre.push(z);
            } else {
                a = z;
            }
        }
        let diff = a - target;
        let loss = diff.norm_squared() / batch;
        let mut delta = diff * (2.0 / batch);
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let weight = &delta * inputs[i].transpose();
            let bias = delta.column_sum();
            if i > 0 {
                let mut back = self.layers[i].weight.transpose() * &delta;
                back.zip_apply(&pre[i - 1], |g, z| *g *= silu_grad(z));
                delta = back;
            }
            grads.push(Layer { weight, bias });
        }
        grads.reverse();
        (loss, Gradients { layers: grads })
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates over the flattened parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, param_count: usize) -> Self {
        Self { config, m: vec![0.0; param_count], v: vec![0.0; param_count], t: 0 }
    }

    pub fn step(&mut self, net: &mut ScoreNetwork, grads: &Gradients) {
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let mut k = 0;
        for (layer, grad) in net.layers.iter_mut().zip(&grads.layers) {
            let params = layer.weight.as_mut_slice().iter_mut().chain(layer.bias.as_mut_slice().iter_mut());
            let gs = grad.weight.iter().chain(grad.bias.iter());
            for (p, &g) in params.zip(gs) {
                self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g;
                self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g;
                *p -= c.learning_rate * (self.m[k] / bc1) / ((self.v[k] / bc2).sqrt() + c.eps);
                k += 1;
            }
        }
    }
}
