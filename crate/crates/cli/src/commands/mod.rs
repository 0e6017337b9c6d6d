pub mod correlate;
pub mod dynamics;
pub mod gaussian_demo;
pub mod gen_data;
pub mod norm_invariance;
pub mod selftrain;

use avh_core::geometry::{self, ClassifierWeights};
use avh_core::synthdata::{self, LabeledDataset};
use avh_core::tinynet::{self, Model, ModelSpec, TrainConfig};

use crate::config::seeds;
use crate::error::CliError;
use crate::Ctx;

/// Per-sample scores of a dataset under a model, taken at the true label.
pub struct SampleScores {
    pub avh: Vec<f64>,
    pub confidence: Vec<f64>,
    pub norm: Vec<f64>,
}

/// Forward pass over every sample: angular hardness (uniform for dead-ReLU
/// embeddings), softmax confidence at the label, and embedding norm.
pub fn score_dataset(model: &Model, data: &LabeledDataset) -> Result<SampleScores, CliError> {
    let weights = model.classifier()?;
    let mut scores = SampleScores {
        avh: Vec::with_capacity(data.len()),
        confidence: Vec::with_capacity(data.len()),
        norm: Vec::with_capacity(data.len()),
    };
    for (x, &y) in data.features.iter().zip(&data.labels) {
        let (embedding, logits) = tinynet::forward_sample(model, x)?;
        scores.avh.push(score_avh(&embedding, &weights, y)?);
        scores.confidence.push(geometry::softmax(&logits)[y]);
        scores.norm.push(geometry::embedding_norm(&embedding));
    }
    Ok(scores)
}

fn score_avh(embedding: &[f64], weights: &ClassifierWeights, y: usize) -> Result<f64, CliError> {
    Ok(geometry::avh_or_uniform(embedding, weights, y)?)
}

/// The mixture training set shared by `dynamics` and the self-contained
/// `correlate` path, annotated with simulated human-selection frequencies.
/// Dynamics are recorded on these same samples; the class means are part of
/// the seeded draw, so a second draw would describe a different geometry.
pub fn mixture_train_set(ctx: &Ctx) -> Result<LabeledDataset, CliError> {
    let params = ctx.config.mixture.to_params(ctx.seed.wrapping_add(seeds::DATA))?;
    let data = synthdata::gen_mixture(&params)?;
    let hsf = synthdata::simulate_hsf(
        data.oracle_posterior.as_ref().expect("generator attaches posteriors"),
        &data.labels,
        ctx.config.mixture.hsf_draws,
        ctx.seed.wrapping_add(seeds::HSF),
    )?;
    Ok(data.with_hsf(hsf)?)
}

/// Initializes the configured model against the dataset shape and trains it,
/// reporting per-epoch callbacks to `hook`.
pub fn train_mixture_model(
    ctx: &Ctx,
    data: &LabeledDataset,
    hook: impl FnMut(usize, &Model),
) -> Result<(Model, TrainConfig), CliError> {
    let dims = ctx.config.model.checked_dims(data.dim(), data.num_classes)?;
    let spec = ModelSpec {
        layer_dims: dims,
        seed: ctx.seed.wrapping_add(seeds::MODEL),
    };
    let config = ctx.config.train_config(ctx.seed)?;
    let model = tinynet::train(&tinynet::init_model(&spec)?, data, &config, hook)?;
    Ok((model, config))
}
