//! Dataset export: one labeled CSV (with simulated human-selection
//! frequencies) plus the oracle-posterior sidecar.

use avh_core::synthdata;

use crate::config::{seeds, DataKind};
use crate::error::CliError;
use crate::Ctx;

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let data = match ctx.config.gen_data.kind {
        DataKind::Mixture => {
            let params = ctx.config.mixture.to_params(ctx.seed.wrapping_add(seeds::DATA))?;
            synthdata::gen_mixture(&params)?
        }
        DataKind::TwoGaussians => {
            let g = &ctx.config.gaussian;
            g.validate()?;
            synthdata::gen_two_gaussians(
                g.n,
                g.dim,
                &g.mean_a,
                &g.mean_b,
                g.sigma,
                ctx.seed.wrapping_add(seeds::DATA),
            )?
        }
    };
    let hsf = synthdata::simulate_hsf(
        data.oracle_posterior.as_ref().expect("generators attach posteriors"),
        &data.labels,
        ctx.config.mixture.hsf_draws,
        ctx.seed.wrapping_add(seeds::HSF),
    )?;
    let data = data.with_hsf(hsf)?;

    ctx.ensure_out_dir()?;
    let dataset_path = ctx.artifact_path("dataset.csv");
    let posterior_path = ctx.artifact_path("posterior.csv");
    synthdata::save_dataset(&data, &dataset_path)?;
    synthdata::save_posterior(&data, &posterior_path)?;
    println!("wrote {} ({} rows)", dataset_path.display(), data.len());
    println!("wrote {}", posterior_path.display());
    Ok(())
}
