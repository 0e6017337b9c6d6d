//! Self-training comparison: one shared source model, then the softmax
//! gate and the AVC gate run side by side on the same shifted target set.

use avh_core::selftrain::{self, SelfTrainMode};
use avh_core::synthdata;
use avh_core::tinynet::{self, ModelSpec, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::seeds;
use crate::error::CliError;
use crate::Ctx;

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let section = &ctx.config.selftrain;
    section.validate()?;
    let base = ctx.config.mixture.to_params(ctx.seed.wrapping_add(seeds::DATA))?;
    let dims = ctx.config.model.checked_dims(base.dim, base.num_classes)?;
    let train_config = ctx.config.train_config(ctx.seed)?;
    // Rounds fine-tune the running model instead of re-running the full
    // source schedule; a hot restart every round swamps the selection
    // signal with optimization churn.
    let round_config = TrainConfig {
        learning_rate: 0.05,
        epochs: 10,
        decay_period: 10,
        ..train_config
    };

    let target_seed = section
        .target_seed
        .unwrap_or_else(|| ctx.seed.wrapping_add(seeds::EVAL));
    let mut pair = synthdata::gen_domain_shift(&base, section.rotation, section.shift, target_seed)?;
    if section.gain_jitter > 0.0 {
        // Per-sample gain on the target domain only. Labels are untouched:
        // gain is a measurement artifact, not a class change.
        let mut rng = ChaCha8Rng::seed_from_u64(target_seed.wrapping_add(1));
        let g = section.gain_jitter;
        for row in &mut pair.target_features {
            let gain = rng.random_range(-g..=g).exp();
            for v in row {
                *v *= gain;
            }
        }
    }

    let spec = ModelSpec {
        layer_dims: dims,
        seed: ctx.seed.wrapping_add(seeds::MODEL),
    };
    // Both modes start from this one source model.
    let source_model = tinynet::train(
        &tinynet::init_model(&spec)?,
        &pair.source,
        &train_config,
        |_, _| {},
    )?;

    ctx.ensure_out_dir()?;
    for (mode, name) in [(SelfTrainMode::Softmax, "softmax"), (SelfTrainMode::Avh, "avh")] {
        let outcome = selftrain::self_train_from(
            &source_model,
            &pair,
            mode,
            section.rounds,
            &section.schedule,
            &round_config,
        )?;
        let mut buf = Vec::new();
        selftrain::write_round_log(&outcome.rounds, &mut buf)?;
        let rounds_path = ctx.write_artifact(&format!("rounds_{name}.csv"), &buf)?;
        let model_path = ctx.artifact_path(&format!("model_{name}.json"));
        tinynet::save_model(&outcome.model, &model_path)?;
        let last = outcome.rounds.last().expect("at least one round");
        println!(
            "wrote {} ({} rounds, final target acc {:.4})",
            rounds_path.display(),
            outcome.rounds.len(),
            last.target_accuracy
        );
        println!("wrote {}", model_path.display());
    }
    Ok(())
}
