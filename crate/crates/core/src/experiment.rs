//! Experiment runner behind the `toim` binary: train, evaluate, sweep one
//! factor, and compare convergence. Every run writes schema-stable CSV/JSON
//! into its output directory and is reproducible from the spec and seed.
//!
//! Output files:
//!
//! | file | columns / content |
//! |------|-------------------|
//! | `loss_curve.csv` | `epoch,mean_loss` |
//! | `checkpoint.json` | full training state |
//! | `dataset.csv` | `id,cam,split,f0..` observations |
//! | `eval_report.json` | CMC curves, mAP, rank-1 |
//! | `cmc_curve.csv` | `rank,cuhk03,market` |
//! | `pca_points.csv` | `x,y,identity,camera,split` |
//! | `embeddings.csv` | `id,cam,split,f0..` embedded query/gallery |
//! | `sweep.csv` | `axis,value,map,rank1_market,rank1_cuhk03,final_loss` |
//! | `convergence.csv` | `loss,epoch,mean_loss,normalized_loss` |

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::eval::{evaluate, pca_project, EvalConfig, EvalReport};
use crate::mining::NegativeStrategy;
use crate::model::{Checkpoint, LossKind, TrainConfig, Trainer};
use crate::synthdata::{gen_dataset, SynthConfig, SynthDataset};

pub const LOSS_CURVE: &str = "loss_curve.csv";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const DATASET: &str = "dataset.csv";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const CMC_CURVE: &str = "cmc_curve.csv";
pub const PCA_POINTS: &str = "pca_points.csv";
pub const EMBEDDINGS: &str = "embeddings.csv";
pub const SWEEP: &str = "sweep.csv";
pub const CONVERGENCE: &str = "convergence.csv";

/// Dimensions swept when none are given.
pub const DEFAULT_DIMENSIONS: [usize; 5] = [128, 256, 512, 1024, 2048];

/// One factor to vary across otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    Gamma(Vec<f64>),
    Dimension(Vec<usize>),
    NegativeStrategy(Vec<NegativeStrategy>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gamma(_) => "gamma",
            Self::Dimension(_) => "dimension",
            Self::NegativeStrategy(_) => "negative_strategy",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Gamma(v) => v.len(),
            Self::Dimension(v) => v.len(),
            Self::NegativeStrategy(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parses `gamma`, `dim`/`dimension`, or `neg-strategy` with an optional
    /// comma-separated value list. Missing lists take the defaults.
    pub fn parse(axis: &str, values: Option<&str>) -> Result<Self> {
        let items: Vec<&str> = values
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default();
        let parse_err = |e: &dyn fmt::Display| invalid("sweep values", e.to_string());
        match axis {
            "gamma" => {
                let v = if items.is_empty() {
                    (0..=10).map(|i| f64::from(i) / 10.0).collect()
                } else {
                    items
                        .iter()
                        .map(|s| s.parse::<f64>().map_err(|e| parse_err(&e)))
                        .collect::<Result<_>>()?
                };
                Ok(Self::Gamma(v))
            }
            "dim" | "dimension" => {
                let v = if items.is_empty() {
                    DEFAULT_DIMENSIONS.to_vec()
                } else {
                    items
                        .iter()
                        .map(|s| s.parse::<usize>().map_err(|e| parse_err(&e)))
                        .collect::<Result<_>>()?
                };
                Ok(Self::Dimension(v))
            }
            "neg-strategy" | "negative_strategy" | "strategy" => {
                let v = if items.is_empty() {
                    vec![NegativeStrategy::UpdateTable, NegativeStrategy::PooledTable]
                } else {
                    items.iter().map(|s| s.parse()).collect::<Result<_>>()?
                };
                Ok(Self::NegativeStrategy(v))
            }
            other => Err(invalid("sweep axis", format!("unknown axis `{other}`"))),
        }
    }

    fn legs(&self, base: &TrainConfig) -> Vec<(String, TrainConfig)> {
        match self {
            Self::Gamma(v) => v
                .iter()
                .map(|&g| {
                    (
                        g.to_string(),
                        TrainConfig {
                            gamma: g,
                            ..base.clone()
                        },
                    )
                })
                .collect(),
            Self::Dimension(v) => v
                .iter()
                .map(|&d| {
                    (
                        d.to_string(),
                        TrainConfig {
                            dim: d,
                            ..base.clone()
                        },
                    )
                })
                .collect(),
            Self::NegativeStrategy(v) => v
                .iter()
                .map(|&s| {
                    (
                        s.to_string(),
                        TrainConfig {
                            negative_strategy: s,
                            ..base.clone()
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Everything one experiment needs. All fields are optional in the JSON
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
    pub loss: LossKind,
    pub out_dir: PathBuf,
    pub sweep: Option<SweepAxis>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            eval: EvalConfig::default(),
            loss: LossKind::Toim,
            out_dir: PathBuf::from("out"),
            sweep: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// Uses one seed for data generation, training, and evaluation.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.synth.seed = seed;
        self.eval.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synth.validate()?;
        if let Some(axis) = &self.sweep {
            if axis.is_empty() {
                return Err(invalid("sweep", "value list is empty"));
            }
        }
        Ok(())
    }
}

/// Result of [`run_train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub dataset: SynthDataset,
    pub curve: Vec<f64>,
}

fn loss_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (e, l) in curve.iter().enumerate() {
        let _ = writeln!(out, "{},{l}", e + 1);
    }
    out
}

fn trainer_for(train: &TrainConfig, loss: LossKind, data: &SynthDataset) -> Result<Trainer> {
    Trainer::new(
        train.clone(),
        loss,
        data.observation_dim(),
        data.num_train_identities(),
        data.num_cameras(),
    )
}

/// Trains in memory without touching the filesystem.
pub fn train_in_memory(
    train: &TrainConfig,
    loss: LossKind,
    data: &SynthDataset,
) -> Result<(Trainer, Vec<f64>)> {
    let mut trainer = trainer_for(train, loss, data)?;
    let curve = trainer.train(&data.train, train.epochs)?;
    Ok((trainer, curve))
}

/// Generates data, trains, and writes `loss_curve.csv`, `checkpoint.json`,
/// and `dataset.csv` into `spec.out_dir`.
pub fn run_train(spec: &ExperimentSpec) -> Result<TrainOutcome> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let dataset = gen_dataset(&spec.synth)?;
    info!("training {} for {} epochs", spec.loss, spec.train.epochs);
    let (trainer, curve) = train_in_memory(&spec.train, spec.loss, &dataset)?;
    fs::write(spec.out_dir.join(LOSS_CURVE), loss_curve_csv(&curve))?;
    trainer.checkpoint().save(spec.out_dir.join(CHECKPOINT))?;
    dataset.save_csv(spec.out_dir.join(DATASET))?;
    Ok(TrainOutcome {
        trainer,
        dataset,
        curve,
    })
}

/// Embeds query and gallery with a trained model and evaluates them.
pub fn evaluate_trainer(
    trainer: &Trainer,
    data: &SynthDataset,
    cfg: &EvalConfig,
) -> Result<(SynthDataset, EvalReport)> {
    let embedded = SynthDataset {
        train: Default::default(),
        query: trainer.embed_set(&data.query)?,
        gallery: trainer.embed_set(&data.gallery)?,
    };
    let report = evaluate(&embedded.query, &embedded.gallery, cfg)?;
    Ok((embedded, report))
}

fn pca_csv(embedded: &SynthDataset) -> Result<String> {
    let rows: Vec<(&Vec<f64>, usize, usize, &str)> =
        [("query", &embedded.query), ("gallery", &embedded.gallery)]
            .into_iter()
            .flat_map(|(split, set)| {
                set.features
                    .iter()
                    .zip(&set.identities)
                    .zip(&set.cameras)
                    .map(move |((f, &id), &cam)| (f, id, cam, split))
            })
            .collect();
    let features: Vec<&Vec<f64>> = rows.iter().map(|r| r.0).collect();
    let projection = pca_project(&features)?;
    let mut out = String::from("x,y,identity,camera,split\n");
    for (p, (_, id, cam, split)) in projection.points.iter().zip(&rows) {
        let _ = writeln!(out, "{},{},{id},{cam},{split}", p[0], p[1]);
    }
    Ok(out)
}

/// Loads a checkpoint and dataset, evaluates, and writes
/// `eval_report.json`, `cmc_curve.csv`, `pca_points.csv`, and
/// `embeddings.csv` into `out_dir`.
pub fn run_eval(
    checkpoint: &Path,
    dataset: &Path,
    out_dir: &Path,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let trainer = Trainer::from_checkpoint(Checkpoint::load(checkpoint)?)?;
    let data = SynthDataset::load_csv(dataset)?;
    eval_and_write(&trainer, &data, out_dir, cfg)
}

fn eval_and_write(
    trainer: &Trainer,
    data: &SynthDataset,
    out_dir: &Path,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    fs::create_dir_all(out_dir)?;
    let (embedded, report) = evaluate_trainer(trainer, data, cfg)?;
    fs::write(out_dir.join(EVAL_REPORT), report.to_json()?)?;
    fs::write(out_dir.join(CMC_CURVE), report.cmc_csv())?;
    fs::write(out_dir.join(PCA_POINTS), pca_csv(&embedded)?)?;
    embedded.save_csv(out_dir.join(EMBEDDINGS))?;
    Ok(report)
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub map: f64,
    pub rank1_market: f64,
    pub rank1_cuhk03: f64,
    pub final_loss: f64,
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis,value,map,rank1_market,rank1_cuhk03,final_loss\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.axis, r.value, r.map, r.rank1_market, r.rank1_cuhk03, r.final_loss
        );
    }
    out
}

/// Trains and evaluates once per axis value. Each leg writes into
/// `<out_dir>/<axis>_<value>/`; the merged table goes to `sweep.csv`. A
/// failing leg leaves the rows completed so far in `sweep.csv` and returns
/// the error.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let axis = spec
        .sweep
        .as_ref()
        .ok_or_else(|| invalid("sweep", "no sweep axis set"))?;
    fs::create_dir_all(&spec.out_dir)?;
    let dataset = gen_dataset(&spec.synth)?;
    let mut rows = Vec::with_capacity(axis.len());
    for (value, train) in axis.legs(&spec.train) {
        let leg_dir = spec.out_dir.join(format!("{}_{value}", axis.name()));
        let leg = (|| -> Result<SweepRow> {
            fs::create_dir_all(&leg_dir)?;
            info!("sweep leg {}={value}", axis.name());
            let (trainer, curve) = train_in_memory(&train, spec.loss, &dataset)?;
            fs::write(leg_dir.join(LOSS_CURVE), loss_curve_csv(&curve))?;
            let (_, report) = evaluate_trainer(&trainer, &dataset, &spec.eval)?;
            fs::write(leg_dir.join(EVAL_REPORT), report.to_json()?)?;
            Ok(SweepRow {
                axis: axis.name().to_string(),
                value: value.clone(),
                map: report.map,
                rank1_market: report.rank1_market,
                rank1_cuhk03: report.rank1_cuhk03,
                final_loss: curve.last().copied().unwrap_or(0.0),
            })
        })();
        match leg {
            Ok(row) => rows.push(row),
            Err(e) => {
                fs::write(spec.out_dir.join(SWEEP), sweep_csv(&rows))?;
                return Err(e);
            }
        }
    }
    fs::write(spec.out_dir.join(SWEEP), sweep_csv(&rows))?;
    Ok(rows)
}

/// Loss curve divided by its first entry.
pub fn normalize_curve(curve: &[f64]) -> Vec<f64> {
    match curve.first() {
        Some(&first) if first != 0.0 => curve.iter().map(|l| l / first).collect(),
        _ => curve.to_vec(),
    }
}

/// First epoch (1-based) whose normalized loss is at or below `threshold`.
pub fn epochs_to_reach(normalized: &[f64], threshold: f64) -> Option<usize> {
    normalized
        .iter()
        .position(|&l| l <= threshold)
        .map(|i| i + 1)
}

/// Normalized loss curves for TOIM and batch-hard triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub toim: Vec<f64>,
    pub triplet: Vec<f64>,
    pub toim_normalized: Vec<f64>,
    pub triplet_normalized: Vec<f64>,
    pub toim_epochs_to_half: Option<usize>,
    pub triplet_epochs_to_half: Option<usize>,
}

impl ConvergenceReport {
    /// TOIM reaches half its initial loss, and no later than triplet does.
    pub fn toim_converges_no_slower(&self) -> bool {
        match (self.toim_epochs_to_half, self.triplet_epochs_to_half) {
            (Some(t), Some(r)) => t <= r,
            (Some(_), None) => true,
            (None, _) => false,
        }
    }
}

/// Trains TOIM and batch-hard triplet with the same number of samples per
/// batch and writes `convergence.csv`.
pub fn run_convergence_compare(spec: &ExperimentSpec) -> Result<ConvergenceReport> {
    spec.validate()?;
    let t = &spec.train;
    if t.triplet_p * t.triplet_k != t.anchors_per_batch {
        return Err(invalid(
            "triplet_p x triplet_k",
            format!(
                "{} x {} does not match {} anchors per batch",
                t.triplet_p, t.triplet_k, t.anchors_per_batch
            ),
        ));
    }
    fs::create_dir_all(&spec.out_dir)?;
    let dataset = gen_dataset(&spec.synth)?;
    let (_, toim) = train_in_memory(t, LossKind::Toim, &dataset)?;
    let (_, triplet) = train_in_memory(t, LossKind::Triplet, &dataset)?;
    let report = ConvergenceReport {
        toim_normalized: normalize_curve(&toim),
        triplet_normalized: normalize_curve(&triplet),
        toim_epochs_to_half: epochs_to_reach(&normalize_curve(&toim), 0.5),
        triplet_epochs_to_half: epochs_to_reach(&normalize_curve(&triplet), 0.5),
        toim,
        triplet,
    };
    let mut csv = String::from("loss,epoch,mean_loss,normalized_loss\n");
    for (name, raw, norm) in [
        ("toim", &report.toim, &report.toim_normalized),
        ("triplet", &report.triplet, &report.triplet_normalized),
    ] {
        for (e, (r, n)) in raw.iter().zip(norm).enumerate() {
            let _ = writeln!(csv, "{name},{},{r},{n}", e + 1);
        }
    }
    fs::write(spec.out_dir.join(CONVERGENCE), csv)?;
    Ok(report)
}

/// Trains and evaluates in one call, writing both sets of outputs.
pub fn run_train_and_eval(spec: &ExperimentSpec) -> Result<(TrainOutcome, EvalReport)> {
    let outcome = run_train(spec)?;
    let report = eval_and_write(
        &outcome.trainer,
        &outcome.dataset,
        &spec.out_dir,
        &spec.eval,
    )?;
    Ok((outcome, report))
}
