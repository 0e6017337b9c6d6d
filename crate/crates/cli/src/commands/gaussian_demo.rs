//! Toy two-Gaussian demo: train a tiny net on overlapping clouds, score
//! every sample, and compare how angular hardness and embedding norm track
//! the oracle hardness.

use avh_core::stats::{self, CorrMethod, CorrelationReport};
use avh_core::synthdata::{self, fmt_float};
use avh_core::tinynet::{self, ModelSpec, TrainConfig};
use serde::Serialize;

use super::score_dataset;
use crate::config::seeds;
use crate::error::CliError;
use crate::Ctx;

#[derive(Serialize)]
struct DemoReport {
    n: usize,
    accuracy: f64,
    spearman_avh: CorrelationReport,
    spearman_norm: CorrelationReport,
}

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let g = &ctx.config.gaussian;
    g.validate()?;
    // The demo pipeline is fixed apart from the data parameters: like its
    // 2-unit architecture, the schedule is part of the demo. The shared
    // `train` section's hotter defaults degenerate a 2-unit embedding.
    let train_config = TrainConfig {
        learning_rate: 0.1,
        decay_period: 30,
        seed: ctx.seed.wrapping_add(seeds::TRAIN),
        ..TrainConfig::default()
    };
    train_config.validate()?;

    let data = synthdata::gen_two_gaussians(
        g.n,
        g.dim,
        &g.mean_a,
        &g.mean_b,
        g.sigma,
        ctx.seed.wrapping_add(seeds::DATA),
    )?;
    let hardness = data.oracle_hardness().expect("generator attaches posteriors");

    let spec = ModelSpec {
        layer_dims: vec![g.dim, 2, 2],
        seed: ctx.seed.wrapping_add(seeds::MODEL),
    };
    let model = tinynet::train(
        &tinynet::init_model(&spec)?,
        &data,
        &train_config,
        |_, _| {},
    )?;

    let scores = score_dataset(&model, &data)?;
    let report = DemoReport {
        n: data.len(),
        accuracy: tinynet::accuracy(&model, &data.features, &data.labels)?,
        spearman_avh: stats::correlation_report(CorrMethod::Spearman, &scores.avh, &hardness)?,
        spearman_norm: stats::correlation_report(CorrMethod::Spearman, &scores.norm, &hardness)?,
    };

    let mut csv = String::from("id,label,hardness,avh,norm,confidence\n");
    for (i, label) in data.labels.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i,
            label,
            fmt_float(hardness[i]),
            fmt_float(scores.avh[i]),
            fmt_float(scores.norm[i]),
            fmt_float(scores.confidence[i]),
        ));
    }
    let scores_path = ctx.write_artifact("scores.csv", csv.as_bytes())?;
    let report_text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::config(format!("cannot encode report: {e}")))?;
    let report_path = ctx.write_artifact("report.json", (report_text + "\n").as_bytes())?;
    tinynet::save_model(&model, &ctx.artifact_path("model.json"))?;

    println!("wrote {} ({} rows)", scores_path.display(), data.len());
    println!(
        "wrote {} (spearman avh {:.3}, norm {:.3})",
        report_path.display(),
        report.spearman_avh.coef,
        report.spearman_norm.coef
    );
    println!("wrote {}", ctx.artifact_path("model.json").display());
    Ok(())
}
