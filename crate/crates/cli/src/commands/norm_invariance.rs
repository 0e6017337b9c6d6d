//! Embedding-scale sweep for a fixed binary geometry: scaling the
//! embedding moves softmax confidence monotonically while the angular
//! score stays put.

use avh_core::geometry::{self, ClassifierWeights};
use avh_core::synthdata::fmt_float;

use crate::error::CliError;
use crate::Ctx;

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let sweep = &ctx.config.sweep;
    sweep.validate()?;

    // Unit-norm class rows at the configured angles from the probe (1, 0):
    // row 0 is the target.
    let weights = ClassifierWeights::new(vec![
        vec![sweep.theta1.cos(), sweep.theta1.sin()],
        vec![sweep.theta2.cos(), -sweep.theta2.sin()],
    ])?;
    let alphas = sweep.alphas();
    let points = geometry::norm_sweep(&[1.0, 0.0], &weights, 0, &alphas)?;

    let mut csv = String::from("alpha,confidence,avh\n");
    for p in &points {
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_float(p.alpha),
            fmt_float(p.confidence),
            fmt_float(p.avh)
        ));
    }
    let path = ctx.write_artifact("sweep.csv", csv.as_bytes())?;
    println!("wrote {} ({} alphas)", path.display(), points.len());
    Ok(())
}
