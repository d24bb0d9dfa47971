use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden-layer sizes as fractions of the input dimension, encoder side.
pub const ENCODER_FRACTIONS: [f64; 4] = [0.75, 0.5, 0.33, 0.25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }
}

/// Fully connected layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
            activation,
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(row, b)| {
                    let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
                    self.activation.apply(z)
                }),
        );
    }
}

/// Mean of squared per-feature differences between an input and its
/// reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct ReconstructionError(pub f64);

impl ReconstructionError {
    pub fn between(x: &[f64], y: &[f64]) -> Self {
        let sum: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        ReconstructionError(sum / x.len() as f64)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Deep autoencoder with independent encoder and decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    layers: Vec<Layer>,
    rng_seed: u64,
}

/// Rounds `fraction * input` half-up, never below 1.
pub fn hidden_dim(input: usize, fraction: f64) -> usize {
    ((fraction * input as f64 + 0.5).floor() as usize).max(1)
}

/// `[input, 75%, 50%, 33%, 25%, 33%, 50%, 75%, input]`.
pub fn layer_dims_for(input: usize) -> Vec<usize> {
    let encoder: Vec<usize> = ENCODER_FRACTIONS.iter().map(|&f| hidden_dim(input, f)).collect();
    let mut dims = vec![input];
    dims.extend(&encoder);
    dims.extend(encoder.iter().rev().skip(1));
    dims.push(input);
    dims
}

impl AutoencoderModel {
    /// Standard topology for `input` features, Glorot-uniform initialized.
    pub fn new(input: usize, seed: u64) -> Result<Self> {
        Self::with_dims(&layer_dims_for(input), seed)
    }

    pub fn with_dims(dims: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_dims_rng(dims, seed, &mut rng)
    }

    pub(crate) fn with_dims_rng(dims: &[usize], seed: u64, rng: &mut impl Rng) -> Result<Self> {
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out, Activation::Sigmoid);
                for v in layer.weights.iter_mut() {
                    *v = rng.gen_range(-limit..=limit);
                }
                layer
            })
            .collect();
        Self::from_layers(layers, seed)
    }

    pub fn from_layers(layers: Vec<Layer>, rng_seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("autoencoder needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(Error::Contract(format!("layer {i} has a zero dimension")));
            }
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::Contract(format!("layer {i} tensor sizes do not match its dims")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Contract(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        let input = layers[0].inputs;
        let output = layers[layers.len() - 1].outputs;
        if input != output {
            return Err(Error::Contract(format!(
                "reconstruction width {output} differs from input width {input}"
            )));
        }
        let code = layers.iter().map(|l| l.outputs).min().unwrap_or(input);
        if layers.len() > 1 && code >= input {
            return Err(Error::Contract(format!(
                "code layer ({code}) must be narrower than the input ({input})"
            )));
        }
        Ok(AutoencoderModel { layers, rng_seed })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn code_dim(&self) -> usize {
        self.layers.iter().map(|l| l.outputs).min().unwrap_or(0)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Contract(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Fills `acts` with the input followed by each layer's output.
    fn trace(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.resize_with(self.layers.len() + 1, Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = acts.split_at_mut(i + 1);
            layer.forward(&done[i], &mut rest[0]);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ReconstructionError)> {
        self.check_input(x)?;
        let mut acts = Vec::new();
        self.trace(x, &mut acts);
        let y = acts.pop().expect("at least one layer");
        let mse = ReconstructionError::between(x, &y);
        Ok((y, mse))
    }

    pub fn mse(&self, x: &[f64]) -> Result<ReconstructionError> {
        self.forward(x).map(|(_, e)| e)
    }

    /// Mean reconstruction error over a set of normalized vectors.
    pub fn mean_mse(&self, xs: &[Vec<f64>]) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::InsufficientData("mean MSE of an empty set".into()));
        }
        let mut ws = Workspace::default();
        let mut total = 0.0;
        for x in xs {
            self.check_input(x)?;
            self.trace(x, &mut ws.acts);
            total += ReconstructionError::between(x, ws.acts.last().expect("output")).0;
        }
        Ok(total / xs.len() as f64)
    }

    /// Allocation-free `mse` for hot loops.
    pub(crate) fn mse_with(&self, x: &[f64], ws: &mut Workspace) -> Result<ReconstructionError> {
        self.check_input(x)?;
        self.trace(x, &mut ws.acts);
        Ok(ReconstructionError::between(x, ws.acts.last().expect("output")))
    }

    /// Per-vector reconstruction errors, in input order.
    pub fn mses(&self, xs: &[Vec<f64>]) -> Result<Vec<ReconstructionError>> {
        let mut ws = Workspace::default();
        xs.iter()
            .map(|x| {
                self.check_input(x)?;
                self.trace(x, &mut ws.acts);
                Ok(ReconstructionError::between(x, ws.acts.last().expect("output")))
            })
            .collect()
    }

    /// Adds the gradient of this sample's MSE to `grads` and returns the MSE.
    pub(crate) fn accumulate_gradient(&self, x: &[f64], grads: &mut Gradients, ws: &mut Workspace) -> f64 {
        self.trace(x, &mut ws.acts);
        let n = x.len() as f64;
        let out = ws.acts.last().expect("output");
        let mse = ReconstructionError::between(x, out).0;

        // delta = dL/dz for the current layer.
        let last = self.layers.len() - 1;
        ws.delta.clear();
        ws.delta.extend(
            out.iter()
                .zip(x)
                .map(|(y, t)| 2.0 * (y - t) / n * self.layers[last].activation.derivative_from_output(*y)),
        );

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &ws.acts[li];
            let g = &mut grads.layers[li];
            for (o, d) in ws.delta.iter().enumerate() {
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, v) in row.iter_mut().zip(input) {
                    *gw += d * v;
                }
            }
            if li == 0 {
                break;
            }
            let below = &self.layers[li - 1];
            ws.next.clear();
            ws.next.resize(layer.inputs, 0.0);
            for (o, d) in ws.delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (acc, w) in ws.next.iter_mut().zip(row) {
                    *acc += d * w;
                }
            }
            for (acc, y) in ws.next.iter_mut().zip(input) {
                *acc *= below.activation.derivative_from_output(*y);
            }
            std::mem::swap(&mut ws.delta, &mut ws.next);
        }
        mse
    }

    /// Gradient of one sample's MSE with respect to every parameter.
    pub fn gradient(&self, x: &[f64]) -> Result<(f64, Gradients)> {
        self.check_input(x)?;
        let mut grads = Gradients::zeros_like(self);
        let mut ws = Workspace::default();
        let loss = self.accumulate_gradient(x, &mut grads, &mut ws);
        Ok((loss, grads))
    }

    /// `params -= step * grads`.
    pub(crate) fn apply(&mut self, grads: &Gradients, step: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= step * d;
            }
            for (b, d) in layer.biases.iter_mut().zip(&g.biases) {
                *b -= step * d;
            }
        }
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_flat_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(model: &AutoencoderModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.biases.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v *= k);
            l.biases.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// Same ordering as [`AutoencoderModel::flat_parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }
}
