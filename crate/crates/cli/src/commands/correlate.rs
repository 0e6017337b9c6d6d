//! Correlation pipeline: per-sample angular hardness, confidence, and
//! class-min-max-scaled norm against human-selection frequency, plus the
//! paired comparison of the two score families. Output is JSON, one report
//! per line.

use avh_core::stats::{self, ComparisonReport, CorrMethod, CorrelationReport};
use avh_core::synthdata::{self, LabeledDataset};
use avh_core::tinynet::{self, Model};
use serde::Serialize;

use super::{mixture_train_set, score_dataset};
use crate::error::CliError;
use crate::Ctx;

#[derive(Serialize)]
struct CorrelationLine<'a> {
    kind: &'static str,
    metric: &'a str,
    #[serde(flatten)]
    report: &'a CorrelationReport,
}

#[derive(Serialize)]
struct ComparisonLine<'a> {
    kind: &'static str,
    method: CorrMethod,
    metric_a: &'static str,
    metric_b: &'static str,
    #[serde(flatten)]
    report: &'a ComparisonReport,
}

fn annotate(e: avh_core::AvhError, what: &str, path: &std::path::Path) -> CliError {
    match CliError::from(e) {
        CliError::Data(msg) => CliError::Data(format!("{what} {}: {msg}", path.display())),
        other => other,
    }
}

fn resolve_inputs(ctx: &Ctx) -> Result<(LabeledDataset, Model), CliError> {
    let section = &ctx.config.correlate;
    match (&section.dataset, &section.model) {
        (Some(dataset), Some(model)) => {
            let data = synthdata::load_dataset(dataset)
                .map_err(|e| annotate(e, "dataset", dataset))?;
            let net = tinynet::load_model(model).map_err(|e| annotate(e, "model", model))?;
            Ok((data, net))
        }
        (None, None) => {
            // Self-contained mode: default mixture plus a freshly trained
            // model, all derived from the run seed.
            let data = mixture_train_set(ctx)?;
            let (model, _) = super::train_mixture_model(ctx, &data, |_, _| {})?;
            Ok((data, model))
        }
        _ => Err(CliError::config(
            "correlate.dataset and correlate.model must be given together",
        )),
    }
}

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let methods = ctx.config.correlate.methods.clone();
    if methods.is_empty() {
        return Err(CliError::config("correlate.methods must not be empty"));
    }
    let (data, model) = resolve_inputs(ctx)?;
    let hsf = data
        .hsf
        .clone()
        .ok_or_else(|| CliError::config("correlate needs a dataset with an hsf column"))?;
    if data.dim() != model.input_dim() || data.num_classes != model.num_classes() {
        return Err(CliError::config(format!(
            "model shape {}x{} does not fit dataset {}x{}",
            model.input_dim(),
            model.num_classes(),
            data.dim(),
            data.num_classes
        )));
    }

    let scores = score_dataset(&model, &data)?;
    let norm_scaled = stats::minmax_scale_by_group(&scores.norm, &data.labels)?;

    let metrics: [(&str, &[f64]); 3] = [
        ("avh", &scores.avh),
        ("confidence", &scores.confidence),
        ("norm", &norm_scaled),
    ];
    let mut lines = Vec::new();
    let mut by_method: Vec<(CorrMethod, Option<f64>, Option<f64>)> = Vec::new();
    for &method in &methods {
        let mut r_avh = None;
        let mut r_conf = None;
        for (name, values) in metrics {
            let report = stats::correlation_report(method, values, &hsf).map_err(|e| {
                match CliError::from(e) {
                    CliError::Numeric(msg) => {
                        CliError::Numeric(format!("correlating {name} with hsf: {msg}"))
                    }
                    other => other,
                }
            })?;
            match name {
                "avh" => r_avh = Some(report.coef),
                "confidence" => r_conf = Some(report.coef),
                _ => {}
            }
            lines.push(
                serde_json::to_string(&CorrelationLine {
                    kind: "correlation",
                    metric: name,
                    report: &report,
                })
                .map_err(|e| CliError::config(format!("cannot encode report: {e}")))?,
            );
        }
        by_method.push((method, r_avh, r_conf));
    }

    // Strength comparison on coefficient magnitudes: AVH tracks hardness
    // with the opposite sign to confidence, so the paired test uses |r|.
    for (method, r_avh, r_conf) in by_method {
        let (Some(r_avh), Some(r_conf)) = (r_avh, r_conf) else {
            continue;
        };
        let report = stats::compare_correlations(r_avh.abs(), r_conf.abs(), data.len(), data.len())?;
        lines.push(
            serde_json::to_string(&ComparisonLine {
                kind: "comparison",
                method,
                metric_a: "avh",
                metric_b: "confidence",
                report: &report,
            })
            .map_err(|e| CliError::config(format!("cannot encode report: {e}")))?,
        );
    }

    let text = lines.join("\n") + "\n";
    let path = ctx.write_artifact("correlations.json", text.as_bytes())?;
    println!("wrote {} ({} reports, n={})", path.display(), lines.len(), data.len());
    Ok(())
}
