//! Sweeps the update rate gamma over a few values and writes sweep.csv into
//! a temporary directory (or the directory given as the first argument).

use std::path::PathBuf;

use toim::experiment::{run_sweep, ExperimentSpec, SweepAxis, SWEEP};

fn main() -> toim::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("toim-sweep"));
    let mut spec = ExperimentSpec {
        out_dir: out.clone(),
        ..ExperimentSpec::default()
    }
    .with_seed(2);
    spec.train.dim = 64;
    spec.train.epochs = 2;
    spec.eval.repetitions = 10;
    spec.sweep = Some(SweepAxis::Gamma(vec![0.0, 0.4, 0.8]));
    for row in run_sweep(&spec)? {
        println!(
            "gamma {:>4}: rank-1 {:.3}, mAP {:.3}, final loss {:.4}",
            row.value, row.rank1_market, row.map, row.final_loss
        );
    }
    println!("wrote {}", out.join(SWEEP).display());
    Ok(())
}
