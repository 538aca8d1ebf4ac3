use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use toim::experiment::{self, ExperimentSpec, SweepAxis, CHECKPOINT, DATASET};
use toim::mining::NegativeStrategy;
use toim::model::LossKind;
use toim::synthdata::gen_dataset;

#[derive(Parser)]
#[command(
    name = "toim",
    version,
    about = "TOIM metric learning on synthetic multi-camera data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write dataset.csv
    GenData(Common),
    /// Train a model and write loss_curve.csv and checkpoint.json
    Train(Common),
    /// Evaluate a checkpoint and write eval_report.json, cmc_curve.csv, pca_points.csv
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to load (defaults to <out>/checkpoint.json)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset CSV to load (defaults to <out>/dataset.csv)
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train and evaluate once per value of one factor and write sweep.csv
    Sweep {
        #[command(flatten)]
        common: Common,
        /// gamma, dim, or neg-strategy
        #[arg(long, default_value = "dim")]
        axis: String,
        /// Comma-separated values; defaults depend on the axis
        #[arg(long)]
        values: Option<String>,
    },
    /// Compare TOIM and batch-hard triplet loss curves and write convergence.csv
    CompareConvergence(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment spec; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["toim", "triplet", "oim", "softmax", "combined"])]
    loss: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_parser = ["ut", "pt"])]
    neg_strategy: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn spec(&self) -> toim::Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_json_file(path)?,
            None => ExperimentSpec::default(),
        };
        if let Some(seed) = self.seed {
            spec = spec.with_seed(seed);
        }
        if let Some(loss) = &self.loss {
            spec.loss = loss.parse::<LossKind>()?;
        }
        if let Some(g) = self.gamma {
            spec.train.gamma = g;
        }
        if let Some(d) = self.dim {
            spec.train.dim = d;
        }
        if let Some(s) = &self.neg_strategy {
            spec.train.negative_strategy = s.parse::<NegativeStrategy>()?;
        }
        if let Some(e) = self.epochs {
            spec.train.epochs = e;
        }
        if let Some(out) = &self.out {
            spec.out_dir.clone_from(out);
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn run(cli: Cli) -> toim::Result<()> {
    match cli.command {
        Command::GenData(common) => {
            let spec = common.spec()?;
            std::fs::create_dir_all(&spec.out_dir)?;
            let path = spec.out_dir.join(DATASET);
            gen_dataset(&spec.synth)?.save_csv(&path)?;
            println!("wrote {}", path.display());
        }
        Command::Train(common) => {
            let spec = common.spec()?;
            let outcome = experiment::run_train(&spec)?;
            println!(
                "trained {} for {} epochs, final loss {:.6}, outputs in {}",
                spec.loss,
                outcome.curve.len(),
                outcome.curve.last().copied().unwrap_or(0.0),
                spec.out_dir.display()
            );
        }
        Command::Eval {
            common,
            checkpoint,
            dataset,
        } => {
            let spec = common.spec()?;
            let checkpoint = checkpoint.unwrap_or_else(|| spec.out_dir.join(CHECKPOINT));
            let dataset = dataset.unwrap_or_else(|| spec.out_dir.join(DATASET));
            let report = experiment::run_eval(&checkpoint, &dataset, &spec.out_dir, &spec.eval)?;
            println!(
                "rank-1 market {:.4}, rank-1 cuhk03 {:.4}, mAP {:.4}",
                report.rank1_market, report.rank1_cuhk03, report.map
            );
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let mut spec = common.spec()?;
            spec.sweep = Some(SweepAxis::parse(&axis, values.as_deref())?);
            for row in experiment::run_sweep(&spec)? {
                println!(
                    "{}={}: mAP {:.4}, rank-1 market {:.4}, final loss {:.6}",
                    row.axis, row.value, row.map, row.rank1_market, row.final_loss
                );
            }
        }
        Command::CompareConvergence(common) => {
            let spec = common.spec()?;
            let report = experiment::run_convergence_compare(&spec)?;
            let show =
                |e: Option<usize>| e.map_or_else(|| "not reached".to_string(), |e| e.to_string());
            println!(
                "epochs to half the initial loss: toim {}, triplet {}",
                show(report.toim_epochs_to_half),
                show(report.triplet_epochs_to_half)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
