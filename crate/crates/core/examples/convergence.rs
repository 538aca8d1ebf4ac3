//! Trains TOIM and batch-hard triplet with 15 samples per batch and prints
//! their normalized loss curves side by side.

use toim::experiment::{run_convergence_compare, ExperimentSpec};

fn main() -> toim::Result<()> {
    let mut spec = ExperimentSpec {
        out_dir: std::env::temp_dir().join("toim-convergence"),
        ..ExperimentSpec::default()
    }
    .with_seed(42);
    spec.train.dim = 64;
    spec.train.epochs = 6;
    let report = run_convergence_compare(&spec)?;
    println!("epoch  toim   triplet");
    for (e, (t, r)) in report
        .toim_normalized
        .iter()
        .zip(&report.triplet_normalized)
        .enumerate()
    {
        println!("{:>5}  {t:.3}  {r:.3}", e + 1);
    }
    println!(
        "epochs to half the initial loss: toim {:?}, triplet {:?}",
        report.toim_epochs_to_half, report.triplet_epochs_to_half
    );
    Ok(())
}
