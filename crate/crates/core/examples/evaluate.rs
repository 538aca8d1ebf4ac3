//! Trains briefly, then reports both CMC protocols, mAP, and a 2-D PCA
//! projection of the query embeddings.

use toim::eval::{pca_project, EvalConfig};
use toim::experiment::{evaluate_trainer, train_in_memory};
use toim::model::{LossKind, TrainConfig};
use toim::synthdata::{gen_dataset, SynthConfig};

fn main() -> toim::Result<()> {
    let data = gen_dataset(&SynthConfig {
        seed: 3,
        ..SynthConfig::default()
    })?;
    let cfg = TrainConfig {
        seed: 3,
        dim: 64,
        epochs: 3,
        ..TrainConfig::default()
    };
    let (trainer, _) = train_in_memory(&cfg, LossKind::Toim, &data)?;
    let eval = EvalConfig {
        repetitions: 20,
        ..EvalConfig::default()
    };
    let (embedded, report) = evaluate_trainer(&trainer, &data, &eval)?;

    println!("rank  cuhk03  market");
    for k in [1, 5, 10, 20] {
        println!(
            "{k:>4}  {:.3}   {:.3}",
            report.cmc_cuhk03[k - 1],
            report.cmc_market[k - 1]
        );
    }
    println!("mAP {:.3}", report.map);

    let pca = pca_project(&embedded.query.features)?;
    println!(
        "explained variance of the two components: {:?}",
        pca.explained_variance
    );
    for (p, id) in pca.points.iter().zip(&embedded.query.identities).take(5) {
        println!("identity {id:>3}: ({:+.3}, {:+.3})", p[0], p[1]);
    }
    Ok(())
}
