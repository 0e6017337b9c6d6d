//! A minimal feedforward classifier: affine + ReLU hidden layers and a
//! bias-free final layer whose weight matrix doubles as the
//! [`ClassifierWeights`] consumed by the angular scoring functions.
//!
//! Training is plain momentum SGD with step learning-rate decay, seeded
//! shuffling, and an epoch hook, so every run is bit-reproducible. Two
//! losses are provided: softmax cross-entropy on the logits, and an angular
//! loss on the embeddings that pushes the target-class angle down through a
//! scaled softmax over `s * (pi - angle)` logits.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{AvhError, Result};
use crate::geometry::{self, ClassifierWeights};
use crate::synthdata::LabeledDataset;

/// Architecture plus initialization seed. `layer_dims` runs input, hidden
/// sizes, embedding size, classes; a two-entry list is a single bias-free
/// linear layer whose embedding is the input itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layer_dims: Vec<usize>,
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(AvhError::invalid(
                "layer_dims needs at least input and class dimensions",
            ));
        }
        if self.layer_dims.contains(&0) {
            return Err(AvhError::invalid("all layer dimensions must be positive"));
        }
        if *self.layer_dims.last().unwrap() < 2 {
            return Err(AvhError::invalid("the class dimension must be at least 2"));
        }
        Ok(())
    }
}

/// One dense layer, row-major `out_dim x in_dim`. Hidden layers carry a
/// bias and are followed by ReLU; the final layer has an empty bias and no
/// activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Layer {
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|i| {
                let row = &self.weights[i * self.in_dim..(i + 1) * self.in_dim];
                let b = self.bias.get(i).copied().unwrap_or(0.0);
                geometry::dot(row, x) + b
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<Layer>,
    epoch: u32,
}

impl Model {
    /// Assembles a model from explicit layers, checking that shapes chain,
    /// hidden biases match their output widths, and the final layer is
    /// bias-free with at least two rows.
    pub fn new(layers: Vec<Layer>, epoch: u32) -> Result<Self> {
        if layers.is_empty() {
            return Err(AvhError::invalid("model needs at least one layer"));
        }
        let last = layers.len() - 1;
        for (l, layer) in layers.iter().enumerate() {
            if layer.in_dim == 0 || layer.out_dim == 0 {
                return Err(AvhError::invalid(format!("layer {l} has a zero dimension")));
            }
            if layer.weights.len() != layer.in_dim * layer.out_dim {
                return Err(AvhError::ShapeMismatch {
                    what: "layer weights",
                    expected: layer.in_dim * layer.out_dim,
                    actual: layer.weights.len(),
                });
            }
            let want_bias = if l == last { 0 } else { layer.out_dim };
            if layer.bias.len() != want_bias {
                return Err(AvhError::ShapeMismatch {
                    what: "layer bias",
                    expected: want_bias,
                    actual: layer.bias.len(),
                });
            }
            if l > 0 && layer.in_dim != layers[l - 1].out_dim {
                return Err(AvhError::ShapeMismatch {
                    what: "layer chaining",
                    expected: layers[l - 1].out_dim,
                    actual: layer.in_dim,
                });
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(AvhError::invalid(format!("layer {l} contains a non-finite value")));
            }
        }
        if layers[last].out_dim < 2 {
            return Err(AvhError::invalid("the final layer needs at least 2 rows"));
        }
        Ok(Self { layers, epoch })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].in_dim)
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    /// Epochs of training this model has absorbed (cumulative across runs).
    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().unwrap().in_dim
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// The final weight matrix viewed as per-class rows for angular scoring.
    pub fn classifier(&self) -> Result<ClassifierWeights> {
        let last = self.layers.last().unwrap();
        let rows: Vec<Vec<f64>> = (0..last.out_dim)
            .map(|i| last.weights[i * last.in_dim..(i + 1) * last.in_dim].to_vec())
            .collect();
        ClassifierWeights::new(rows)
    }
}

/// He-style initialization: every weight is zero-mean Gaussian with
/// variance `2 / fan_in`; biases start at zero. Deterministic per seed.
pub fn init_model(spec: &ModelSpec) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let last = spec.layer_dims.len() - 2;
    let layers = spec
        .layer_dims
        .windows(2)
        .enumerate()
        .map(|(l, pair)| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            Layer {
                weights: (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect(),
                bias: if l == last { Vec::new() } else { vec![0.0; fan_out] },
                in_dim: fan_in,
                out_dim: fan_out,
            }
        })
        .collect();
    Model::new(layers, 0)
}

/// Activations after every layer: index 0 is the input, hidden entries are
/// post-ReLU, the last entry is the logits.
fn forward_trace(model: &Model, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    if x.len() != model.input_dim() {
        return Err(AvhError::ShapeMismatch {
            what: "input",
            expected: model.input_dim(),
            actual: x.len(),
        });
    }
    let mut acts = Vec::with_capacity(model.layers.len() + 1);
    acts.push(x.to_vec());
    let last = model.layers.len() - 1;
    for (l, layer) in model.layers.iter().enumerate() {
        let mut z = layer.affine(acts.last().unwrap());
        if l != last {
            for v in &mut z {
                *v = v.max(0.0);
            }
        }
        acts.push(z);
    }
    Ok(acts)
}

/// Embedding (post-ReLU penultimate activations; the raw input for a
/// single-layer model) and logits for one sample.
pub fn forward_sample(model: &Model, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut acts = forward_trace(model, x)?;
    let logits = acts.pop().unwrap();
    let embedding = acts.pop().unwrap();
    Ok((embedding, logits))
}

/// Batched forward pass; row `i` of each output matches
/// `forward_sample(model, &xs[i])`.
#[allow(clippy::type_complexity)]
pub fn forward(model: &Model, xs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut embeddings = Vec::with_capacity(xs.len());
    let mut logits = Vec::with_capacity(xs.len());
    for x in xs {
        let (e, l) = forward_sample(model, x)?;
        embeddings.push(e);
        logits.push(l);
    }
    Ok((embeddings, logits))
}

/// Argmax class per sample (lowest index wins ties).
pub fn predict(model: &Model, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
    xs.iter()
        .map(|x| {
            let (_, logits) = forward_sample(model, x)?;
            Ok(argmax(&logits))
        })
        .collect()
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose argmax logit matches the label.
pub fn accuracy(model: &Model, xs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if xs.len() != labels.len() {
        return Err(AvhError::ShapeMismatch {
            what: "labels",
            expected: xs.len(),
            actual: labels.len(),
        });
    }
    if xs.is_empty() {
        return Err(AvhError::invalid("accuracy needs at least one sample"));
    }
    let pred = predict(model, xs)?;
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / xs.len() as f64)
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits
/// (`(softmax - one_hot) / N` per row).
pub fn loss_softmax_ce(logits: &[Vec<f64>], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    if logits.is_empty() {
        return Err(AvhError::invalid("loss needs a non-empty batch"));
    }
    if logits.len() != labels.len() {
        return Err(AvhError::ShapeMismatch {
            what: "labels",
            expected: logits.len(),
            actual: labels.len(),
        });
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &y) in logits.iter().zip(labels) {
        if y >= row.len() {
            return Err(AvhError::ClassIndex {
                index: y,
                classes: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(AvhError::invalid("logits contain a non-finite value"));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        let mut g: Vec<f64> = row.iter().map(|l| (l - lse).exp() / n).collect();
        g[y] -= 1.0 / n;
        grads.push(g);
    }
    Ok((loss / n, grads))
}

/// Which scalar the angular loss reduces per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvhLossForm {
    /// Negative log of the target's angular-softmax probability (default).
    NegLog,
    /// The raw probability itself, kept for side-by-side comparison; note
    /// that minimizing it drives the target probability *down*.
    ProbabilitySum,
}

/// Value and gradients of the angular loss for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct AvhLossValue {
    pub loss: f64,
    pub d_embeddings: Vec<Vec<f64>>,
    /// Gradient w.r.t. the classifier rows, same shape as the weights.
    pub d_weights: Vec<Vec<f64>>,
}

const COS_CLAMP: f64 = 1.0 - 1e-7;

/// Angular loss over a batch of embeddings: per-class logits are
/// `s * (pi - angle(x, w_k))` and the per-sample contribution is selected by
/// `form`. Cosines are clamped to `[-1+1e-7, 1-1e-7]` before `acos`, so the
/// gradient stays finite; a clamped coordinate contributes zero gradient.
pub fn loss_avh(
    embeddings: &[Vec<f64>],
    weights: &ClassifierWeights,
    labels: &[usize],
    scale_s: f64,
    form: AvhLossForm,
) -> Result<AvhLossValue> {
    if embeddings.is_empty() {
        return Err(AvhError::invalid("loss needs a non-empty batch"));
    }
    if embeddings.len() != labels.len() {
        return Err(AvhError::ShapeMismatch {
            what: "labels",
            expected: embeddings.len(),
            actual: labels.len(),
        });
    }
    if !(scale_s > 0.0) || !scale_s.is_finite() {
        return Err(AvhError::invalid(format!("scale_s must be positive, got {scale_s}")));
    }
    let c = weights.num_classes();
    let d = weights.dim();
    let n = embeddings.len() as f64;
    let row_norms: Vec<f64> = weights.rows().iter().map(|r| geometry::norm(r)).collect();
    let mut loss = 0.0;
    let mut d_embeddings = Vec::with_capacity(embeddings.len());
    let mut d_weights = vec![vec![0.0; d]; c];
    for (x, &y) in embeddings.iter().zip(labels) {
        if y >= c {
            return Err(AvhError::ClassIndex { index: y, classes: c });
        }
        if x.len() != d {
            return Err(AvhError::ShapeMismatch {
                what: "embedding",
                expected: d,
                actual: x.len(),
            });
        }
        let nx = geometry::norm(x);
        if nx == 0.0 {
            return Err(AvhError::ZeroNorm { arg: "embedding" });
        }
        let raw_cos: Vec<f64> = weights
            .rows()
            .iter()
            .zip(&row_norms)
            .map(|(w, nw)| geometry::dot(x, w) / (nx * nw))
            .collect();
        let cos: Vec<f64> = raw_cos.iter().map(|t| t.clamp(-COS_CLAMP, COS_CLAMP)).collect();
        // Angular logits a_k = s * (pi - acos(t_k)).
        let a: Vec<f64> = cos
            .iter()
            .map(|t| scale_s * (std::f64::consts::PI - t.acos()))
            .collect();
        let amax = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = amax + a.iter().map(|v| (v - amax).exp()).sum::<f64>().ln();
        let p: Vec<f64> = a.iter().map(|v| (v - lse).exp()).collect();
        // dL/da_k for this sample, before the 1/N batch mean.
        let d_a: Vec<f64> = match form {
            AvhLossForm::NegLog => {
                loss += lse - a[y];
                (0..c).map(|k| p[k] - if k == y { 1.0 } else { 0.0 }).collect()
            }
            AvhLossForm::ProbabilitySum => {
                loss += p[y];
                (0..c)
                    .map(|k| p[y] * (if k == y { 1.0 } else { 0.0 } - p[k]))
                    .collect()
            }
        };
        let mut dx = vec![0.0; d];
        for k in 0..c {
            if raw_cos[k].abs() > COS_CLAMP {
                continue; // clamped: flat in every parameter
            }
            let t = cos[k];
            // a_k = s*(pi - acos t)  =>  da/dt = s / sqrt(1 - t^2).
            let d_t = d_a[k] * scale_s / (1.0 - t * t).sqrt() / n;
            let w = weights.row(k);
            let nw = row_norms[k];
            for j in 0..d {
                dx[j] += d_t * (w[j] / (nx * nw) - t * x[j] / (nx * nx));
                d_weights[k][j] += d_t * (x[j] / (nx * nw) - t * w[j] / (nw * nw));
            }
        }
        d_embeddings.push(dx);
    }
    Ok(AvhLossValue {
        loss: loss / n,
        d_embeddings,
        d_weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftmaxCe,
    AvhLoss,
}

/// Hyperparameters for one training run. The learning rate at epoch `e`
/// (1-based) is `learning_rate * decay_factor^((e-1) / decay_period)` with
/// integer division.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub decay_factor: f64,
    pub decay_period: usize,
    pub batch_size: usize,
    pub loss_kind: LossKind,
    pub scale_s: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.3,
            momentum: 0.9,
            epochs: 30,
            decay_factor: 0.1,
            decay_period: 10,
            batch_size: 32,
            loss_kind: LossKind::SoftmaxCe,
            scale_s: 8.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(AvhError::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(AvhError::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(AvhError::invalid("decay_factor must lie in (0, 1]"));
        }
        if self.decay_period == 0 {
            return Err(AvhError::invalid("decay_period must be positive"));
        }
        if self.batch_size == 0 {
            return Err(AvhError::invalid("batch_size must be positive"));
        }
        if !(self.scale_s > 0.0) || !self.scale_s.is_finite() {
            return Err(AvhError::invalid("scale_s must be positive"));
        }
        Ok(())
    }
}

struct Velocity {
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Gradient of the configured loss for one mini-batch, averaged over the
/// batch, for every layer. Returned in the same shapes as the model.
#[allow(clippy::type_complexity)]
fn batch_gradients(
    model: &Model,
    data: &LabeledDataset,
    batch: &[usize],
    config: &TrainConfig,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let nl = model.layers.len();
    let mut grad_w: Vec<Vec<f64>> = model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> = model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();
    let traces: Vec<Vec<Vec<f64>>> = batch
        .iter()
        .map(|&i| forward_trace(model, &data.features[i]))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();

    // Per-sample gradient w.r.t. the embedding, plus the final layer's own
    // gradient, depending on the loss.
    let mut d_embeddings: Vec<Vec<f64>> = Vec::with_capacity(batch.len());
    match config.loss_kind {
        LossKind::SoftmaxCe => {
            let logits: Vec<Vec<f64>> = traces.iter().map(|t| t[nl].clone()).collect();
            let (_, d_logits) = loss_softmax_ce(&logits, &labels)?;
            let final_layer = &model.layers[nl - 1];
            for (trace, dl) in traces.iter().zip(&d_logits) {
                let emb = &trace[nl - 1];
                let mut dx = vec![0.0; final_layer.in_dim];
                for i in 0..final_layer.out_dim {
                    let row = &final_layer.weights[i * final_layer.in_dim..(i + 1) * final_layer.in_dim];
                    for j in 0..final_layer.in_dim {
                        grad_w[nl - 1][i * final_layer.in_dim + j] += dl[i] * emb[j];
                        dx[j] += dl[i] * row[j];
                    }
                }
                d_embeddings.push(dx);
            }
        }
        LossKind::AvhLoss => {
            let embeddings: Vec<Vec<f64>> = traces.iter().map(|t| t[nl - 1].clone()).collect();
            let value = loss_avh(
                &embeddings,
                &model.classifier()?,
                &labels,
                config.scale_s,
                AvhLossForm::NegLog,
            )?;
            let final_layer = &model.layers[nl - 1];
            for (i, row) in value.d_weights.iter().enumerate() {
                grad_w[nl - 1][i * final_layer.in_dim..(i + 1) * final_layer.in_dim]
                    .copy_from_slice(row);
            }
            d_embeddings = value.d_embeddings;
        }
    }

    // Backpropagate each sample's embedding gradient through the hidden
    // stack (layers nl-2 .. 0), masking by the ReLU activations.
    for (trace, mut g) in traces.iter().zip(d_embeddings) {
        for l in (0..nl - 1).rev() {
            let layer = &model.layers[l];
            let input = &trace[l];
            let output = &trace[l + 1];
            let mut g_in = vec![0.0; layer.in_dim];
            for i in 0..layer.out_dim {
                if output[i] <= 0.0 {
                    continue;
                }
                let row = &layer.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                grad_b[l][i] += g[i];
                for j in 0..layer.in_dim {
                    grad_w[l][i * layer.in_dim + j] += g[i] * input[j];
                    g_in[j] += g[i] * row[j];
                }
            }
            g = g_in;
        }
    }
    Ok((grad_w, grad_b))
}

fn check_training_inputs(model: &Model, data: &LabeledDataset) -> Result<()> {
    data.validate()?;
    if data.is_empty() {
        return Err(AvhError::invalid("training needs a non-empty dataset"));
    }
    if data.dim() != model.input_dim() {
        return Err(AvhError::ShapeMismatch {
            what: "training features",
            expected: model.input_dim(),
            actual: data.dim(),
        });
    }
    if data.num_classes != model.num_classes() {
        return Err(AvhError::ShapeMismatch {
            what: "training classes",
            expected: model.num_classes(),
            actual: data.num_classes,
        });
    }
    Ok(())
}

/// Momentum-SGD training. The dataset is reshuffled every epoch from a
/// single RNG seeded by `config.seed`; `hook` runs after each epoch with
/// the 1-based epoch index and the current model. `epochs = 0` returns the
/// model unchanged.
pub fn train(
    model: &Model,
    data: &LabeledDataset,
    config: &TrainConfig,
    mut hook: impl FnMut(usize, &Model),
) -> Result<Model> {
    config.validate()?;
    check_training_inputs(model, data)?;
    let mut model = model.clone();
    let mut velocity: Vec<Velocity> = model
        .layers
        .iter()
        .map(|l| Velocity {
            w: vec![0.0; l.weights.len()],
            b: vec![0.0; l.bias.len()],
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=config.epochs {
        let steps = ((epoch - 1) / config.decay_period) as i32;
        let lr = config.learning_rate * config.decay_factor.powi(steps);
        indices.shuffle(&mut rng);
        for batch in indices.chunks(config.batch_size) {
            let (grad_w, grad_b) = batch_gradients(&model, data, batch, config)?;
            for (l, layer) in model.layers.iter_mut().enumerate() {
                let vel = &mut velocity[l];
                for (j, g) in grad_w[l].iter().enumerate() {
                    vel.w[j] = config.momentum * vel.w[j] + g;
                    layer.weights[j] -= lr * vel.w[j];
                }
                for (j, g) in grad_b[l].iter().enumerate() {
                    vel.b[j] = config.momentum * vel.b[j] + g;
                    layer.bias[j] -= lr * vel.b[j];
                }
            }
        }
        model.epoch += 1;
        hook(epoch, &model);
    }
    Ok(model)
}

/// Result of [`train_weighted`]: the retrained model and the value of the
/// thresholded self-training objective at the final weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedOutcome {
    pub model: Model,
    /// Summed objective: source cross-entropy plus, per selected target
    /// sample with pseudo-label k, `-log(p_k / lambda_k)`. The
    /// `log lambda_k` offsets are constant in the weights, so they appear
    /// here but never in gradients.
    pub reported_loss: f64,
}

/// Retrains on the union of the labeled source set and a pseudo-labeled
/// target subset, exactly as [`train`] would on the concatenation (so an
/// empty selection reproduces plain source training bit for bit).
/// `lambda` holds the per-class selection thresholds used only for the
/// reported objective value.
pub fn train_weighted(
    model: &Model,
    source: &LabeledDataset,
    selected_features: &[Vec<f64>],
    selected_labels: &[usize],
    lambda: &[f64],
    config: &TrainConfig,
) -> Result<WeightedOutcome> {
    if selected_features.len() != selected_labels.len() {
        return Err(AvhError::ShapeMismatch {
            what: "selected labels",
            expected: selected_features.len(),
            actual: selected_labels.len(),
        });
    }
    if lambda.len() != model.num_classes() {
        return Err(AvhError::ShapeMismatch {
            what: "lambda",
            expected: model.num_classes(),
            actual: lambda.len(),
        });
    }
    if let Some(v) = lambda.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(AvhError::invalid(format!("lambda entries must lie in (0, 1], got {v}")));
    }
    let mut features = source.features.clone();
    features.extend_from_slice(selected_features);
    let mut labels = source.labels.clone();
    labels.extend_from_slice(selected_labels);
    let combined = LabeledDataset::new(features, labels, source.num_classes)?;
    let trained = train(model, &combined, config, |_, _| {})?;

    let mut reported = 0.0;
    for (x, &y) in source.features.iter().zip(&source.labels) {
        let (_, logits) = forward_sample(&trained, x)?;
        reported -= log_softmax_at(&logits, y);
    }
    for (x, &k) in selected_features.iter().zip(selected_labels) {
        let (_, logits) = forward_sample(&trained, x)?;
        reported -= log_softmax_at(&logits, k) - lambda[k].ln();
    }
    Ok(WeightedOutcome {
        model: trained,
        reported_loss: reported,
    })
}

fn log_softmax_at(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits[y] - lse
}

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    layer_dims: Vec<usize>,
    epoch: u32,
    layers: Vec<CheckpointLayer>,
}

const CHECKPOINT_VERSION: u32 = 1;

/// Writes the model as versioned JSON: `layer_dims`, the epoch counter, and
/// per-layer row-major weights plus bias (empty for the final layer).
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        layer_dims: model.layer_dims(),
        epoch: model.epoch,
        layers: model
            .layers
            .iter()
            .map(|l| CheckpointLayer {
                weights: l.weights.clone(),
                bias: l.bias.clone(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| AvhError::invalid(format!("cannot encode checkpoint: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Reads a checkpoint written by [`save_model`], validating the version tag
/// and that shapes chain correctly.
pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| AvhError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    if file.format_version != CHECKPOINT_VERSION {
        return Err(AvhError::invalid(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            file.format_version
        )));
    }
    if file.layer_dims.len() < 2 || file.layers.len() != file.layer_dims.len() - 1 {
        return Err(AvhError::invalid("checkpoint layer count does not match layer_dims"));
    }
    let layers = file
        .layers
        .into_iter()
        .enumerate()
        .map(|(l, cl)| Layer {
            weights: cl.weights,
            bias: cl.bias,
            in_dim: file.layer_dims[l],
            out_dim: file.layer_dims[l + 1],
        })
        .collect::<Vec<_>>();
    Model::new(layers, file.epoch)
}
