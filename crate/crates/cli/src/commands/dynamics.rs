//! Training-dynamics export: train on a mixture draw while recording
//! per-epoch, per-HSF-bin aggregates over the training samples.

use avh_core::dynamics::{record_epoch, BinVariable, DynamicsTable};

use super::mixture_train_set;
use crate::error::CliError;
use crate::Ctx;

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let edges = ctx.config.bins.resolve()?;
    let data = mixture_train_set(ctx)?;

    let mut table = DynamicsTable::new();
    let mut record_err = None;
    super::train_mixture_model(ctx, &data, |epoch, model| {
        if record_err.is_some() {
            return;
        }
        let result = record_epoch(model, &data, BinVariable::Hsf, &edges, epoch)
            .and_then(|rows| table.push_epoch(rows));
        if let Err(e) = result {
            record_err = Some(e);
        }
    })?;
    if let Some(e) = record_err {
        return Err(e.into());
    }

    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    let path = ctx.write_artifact("dynamics.csv", &buf)?;
    println!(
        "wrote {} ({} epochs x {} bins)",
        path.display(),
        table.num_epochs(),
        table.num_bins()
    );
    Ok(())
}
