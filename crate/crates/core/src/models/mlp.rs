//! Feed-forward classifier: tanh hidden layers, normalized-exponential
//! output, mean cross-entropy loss, full-batch gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Dense layer; `weights` is row-major `[output][input]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in self.weights.chunks_exact(self.inputs).enumerate() {
            out[o] = self.biases[o] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<Layer>,
}

impl Network {
    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Parameter(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(())
    }

    /// All parameters zero; every input maps to the uniform distribution.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            layer_sizes: sizes.to_vec(),
            activation,
            layers,
        })
    }

    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn seeded(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Flattened parameters: each layer's weights, then its biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Parameter(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.biases.len());
            l.biases.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Runs every layer, keeping the activations (input first, probabilities last).
    fn forward_trace(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.resize(self.layers.len() + 1, Vec::new());
        acts[0].clear();
        acts[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, todo) = acts.split_at_mut(i + 1);
            let out = &mut todo[0];
            out.resize(layer.outputs, 0.0);
            layer.forward_into(&done[i], out);
            if i == last {
                softmax_in_place(out);
            } else {
                out.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
        }
    }

    /// Output probabilities for one (already standardized) input.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut acts = Vec::new();
        self.forward_trace(x, &mut acts);
        acts.pop().expect("output layer")
    }

    /// Mean cross-entropy over a batch.
    pub fn loss(&self, inputs: &[Vec<f64>], labels: &[usize]) -> f64 {
        let mut acts = Vec::new();
        let total: f64 = inputs
            .iter()
            .zip(labels)
            .map(|(x, &y)| {
                self.forward_trace(x, &mut acts);
                -acts.last().expect("output")[y].max(f64::MIN_POSITIVE).ln()
            })
            .sum();
        total / inputs.len() as f64
    }

    /// Mean cross-entropy and its gradient, flattened like [`Network::params`].
    pub fn loss_and_gradient(&self, inputs: &[Vec<f64>], labels: &[usize]) -> (f64, Vec<f64>) {
        let n = inputs.len() as f64;
        let mut grad = vec![0.0; self.param_count()];
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.param_count();
                Some(o)
            })
            .collect();
        let mut acts = Vec::new();
        let mut delta = Vec::new();
        let mut next_delta = Vec::new();
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            self.forward_trace(x, &mut acts);
            let probs = acts.last().expect("output");
            loss -= probs[y].max(f64::MIN_POSITIVE).ln();
            delta.clear();
            delta.extend(
                probs
                    .iter()
                    .enumerate()
                    .map(|(k, p)| (p - if k == y { 1.0 } else { 0.0 }) / n),
            );
            for (li, layer) in self.layers.iter().enumerate().rev() {
                let input = &acts[li];
                let base = offsets[li];
                let (gw, gb) = grad[base..base + layer.param_count()].split_at_mut(layer.weights.len());
                for (o, d) in delta.iter().enumerate() {
                    gb[o] += d;
                    for (g, xi) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(input) {
                        *g += d * xi;
                    }
                }
                if li > 0 {
                    next_delta.clear();
                    next_delta.resize(layer.inputs, 0.0);
                    for (o, d) in delta.iter().enumerate() {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (nd, w) in next_delta.iter_mut().zip(row) {
                            *nd += w * d;
                        }
                    }
                    for (nd, a) in next_delta.iter_mut().zip(input) {
                        *nd *= self.activation.derivative_from_output(*a);
                    }
                    std::mem::swap(&mut delta, &mut next_delta);
                }
            }
        }
        (loss / n, grad)
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// Per-feature z-score parameters learned on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput("no rows to standardize"))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut std = vec![0.0; d];
        for r in rows {
            for ((s, x), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (x - m) * (x - m) / n;
            }
        }
        // Constant features pass through centred but unscaled.
        std.iter_mut()
            .for_each(|s| *s = if *s > 1e-24 { s.sqrt() } else { 1.0 });
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// A trained classifier bound to its feature schema and class names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub schema: Schema,
    pub classes: Vec<String>,
    pub standardizer: Standardizer,
    pub network: Network,
}

impl MlpModel {
    pub fn validate(&self) -> Result<()> {
        let d = self.schema.len();
        if self.network.input_dim() != d || self.standardizer.mean.len() != d || self.standardizer.std.len() != d {
            return Err(Error::Model(format!(
                "input layer does not match schema {}",
                self.schema
            )));
        }
        if self.network.output_dim() != self.classes.len() {
            return Err(Error::Model("output layer does not match class list".into()));
        }
        for (i, l) in self.network.layers.iter().enumerate() {
            if l.inputs != self.network.layer_sizes[i]
                || l.outputs != self.network.layer_sizes[i + 1]
                || l.weights.len() != l.inputs * l.outputs
                || l.biases.len() != l.outputs
            {
                return Err(Error::Model(format!("layer {i} has inconsistent shape")));
            }
        }
        if !self.network.is_finite() || self.standardizer.std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Model("non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        x.expect_schema(self.schema)?;
        Ok(self.network.forward(&self.standardizer.apply(&x.values)))
    }

    /// Index and probability of the most likely class; ties go to the lower index.
    pub fn classify(&self, x: &FeatureVector) -> Result<(usize, f64)> {
        let p = self.predict(x)?;
        Ok(argmax(&p))
    }
}

pub(crate) fn argmax(p: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    (best, p[best])
}

/// Output probabilities of `m` at `x`.
pub fn mlp_predict(m: &MlpModel, x: &FeatureVector) -> Result<Vec<f64>> {
    m.predict(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpTraining {
    pub model: MlpModel,
    pub final_loss: f64,
    pub training_accuracy: f64,
}

/// Trains a classifier on labelled vectors of one schema.
///
/// `labels[i]` indexes `classes`. Inputs are z-scored with statistics of the
/// training set, which are stored in the model.
pub fn mlp_train(
    data: &[FeatureVector],
    labels: &[usize],
    classes: &[String],
    cfg: &TrainConfig,
) -> Result<MlpTraining> {
    cfg.validate()?;
    if data.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} samples but {} labels",
            data.len(),
            labels.len()
        )));
    }
    let first = data.first().ok_or(Error::EmptyInput("no training samples"))?;
    let schema = first.schema;
    for x in data {
        x.expect_schema(schema)?;
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= classes.len()) {
        return Err(Error::Data(format!("label {bad} outside {} classes", classes.len())));
    }
    let mut present = vec![false; classes.len()];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::Data("training data must contain at least two classes".into()));
    }

    let raw: Vec<Vec<f64>> = data.iter().map(|x| x.values.clone()).collect();
    let standardizer = Standardizer::fit(&raw)?;
    let inputs: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.apply(r)).collect();

    let mut sizes = vec![schema.len()];
    sizes.extend_from_slice(&cfg.hidden_layers);
    sizes.push(classes.len());
    let mut network = Network::seeded(&sizes, Activation::Tanh, cfg.seed)?;
    let mut params = network.params();
    for _ in 0..cfg.max_iterations {
        let (_, grad) = network.loss_and_gradient(&inputs, labels);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
        network.set_params(&params)?;
    }
    let final_loss = network.loss(&inputs, labels);
    let correct = inputs
        .iter()
        .zip(labels)
        .filter(|(x, &y)| argmax(&network.forward(x)).0 == y)
        .count();
    let model = MlpModel {
        schema,
        classes: classes.to_vec(),
        standardizer,
        network,
    };
    model.validate()?;
    Ok(MlpTraining {
        model,
        final_loss,
        training_accuracy: correct as f64 / inputs.len() as f64,
    })
}
