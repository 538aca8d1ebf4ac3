//! Trains the MLP with the TOIM loss on synthetic data and prints the
//! per-epoch loss. Pass a loss name (toim, triplet, oim, softmax, combined)
//! as the first argument to train a baseline instead.

use toim::model::{LossKind, TrainConfig, Trainer};
use toim::synthdata::{gen_dataset, SynthConfig};

fn main() -> toim::Result<()> {
    let loss: LossKind = std::env::args()
        .nth(1)
        .as_deref()
        .unwrap_or("toim")
        .parse()?;
    let data = gen_dataset(&SynthConfig {
        seed: 1,
        ..SynthConfig::default()
    })?;
    let cfg = TrainConfig {
        seed: 1,
        dim: 64,
        epochs: 5,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(
        cfg.clone(),
        loss,
        data.observation_dim(),
        data.num_train_identities(),
        data.num_cameras(),
    )?;
    for (epoch, l) in trainer.train(&data.train, cfg.epochs)?.iter().enumerate() {
        println!("{loss} epoch {:>2}: mean loss {l:.5}", epoch + 1);
    }
    println!(
        "pooled table: {} of {} slots written",
        trainer.pooled_table().initialized_count(),
        trainer.pooled_table().slot_count()
    );
    Ok(())
}
