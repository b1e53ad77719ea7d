//! Ablation and sweep drivers.
//!
//! Variants retrain the same dataset with one ingredient changed: a loss
//! toggled off, a single-level discriminator, the HR-only baseline, or a
//! different LR rate set. Runs are independent pure functions of
//! `(config, seed)`, so they parallelize without affecting results.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;

use crate::datagen::MlrDataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, EvalReport};
use crate::model::ModelConfig;
use crate::training::{train, TrainConfig, TrainOutcome};

/// A named training variant of the base configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoAdv,
    NoRec,
    NoCls,
    NoTri,
    SingleLevel,
    HrOnly,
    HrLrNoAdv,
    Rates(BTreeSet<u32>),
}

impl Variant {
    pub fn apply(&self, base_train: &TrainConfig, base_model: &ModelConfig) -> (TrainConfig, ModelConfig) {
        let mut t = base_train.clone();
        let mut m = base_model.clone();
        match self {
            Variant::Full => {}
            Variant::NoAdv | Variant::HrLrNoAdv => t.adv = false,
            Variant::NoRec => t.rec = false,
            Variant::NoCls => t.cls = false,
            Variant::NoTri => t.tri = false,
            Variant::SingleLevel => {
                m.discriminator_levels = [m.num_blocks()].into_iter().collect();
            }
            Variant::HrOnly => {
                t.use_lr_stream = false;
                t.adv = false;
            }
            Variant::Rates(rates) => t.rates = rates.clone(),
        }
        (t, m)
    }
}

/// The full suite: per-loss ablations, discriminator depth, the two
/// baselines, and the rate combinations.
pub fn ablation_configs(
    base_train: &TrainConfig,
    base_model: &ModelConfig,
) -> Vec<(String, TrainConfig, ModelConfig)> {
    let single = |r: u32| Variant::Rates([r].into_iter().collect());
    let multi = Variant::Rates([2, 3, 4].into_iter().collect());
    let variants: Vec<(&str, Variant)> = vec![
        ("full", Variant::Full),
        ("no_adv", Variant::NoAdv),
        ("no_rec", Variant::NoRec),
        ("no_cls", Variant::NoCls),
        ("no_tri", Variant::NoTri),
        ("single_level", Variant::SingleLevel),
        ("hr_only", Variant::HrOnly),
        ("hr_lr_no_adv", Variant::HrLrNoAdv),
        ("rate_2", single(2)),
        ("rate_3", single(3)),
        ("rate_4", single(4)),
        ("rate_234", multi),
    ];
    variants
        .into_iter()
        .map(|(name, v)| {
            let (t, m) = v.apply(base_train, base_model);
            (name.to_string(), t, m)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub report: EvalReport,
}

/// Train one configuration and evaluate it on the dataset's test split.
pub fn train_and_eval(
    train_cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    eval_opts: &EvalOptions,
    dataset: &MlrDataset,
) -> Result<(TrainOutcome, EvalReport)> {
    let outcome = train(train_cfg, model_cfg, eval_opts, dataset)?;
    let report = evaluate(&outcome.model, &dataset.query, &dataset.gallery, eval_opts)?;
    Ok((outcome, report))
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers <= 1 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?
        .install(f)
}

/// Run all twelve variants; rows come back in declaration order.
pub fn run_ablation_suite(
    base_train: &TrainConfig,
    base_model: &ModelConfig,
    eval_opts: &EvalOptions,
    dataset: &MlrDataset,
    workers: usize,
) -> Result<Vec<AblationRow>> {
    let configs = ablation_configs(base_train, base_model);
    with_pool(workers, || {
        configs
            .par_iter()
            .map(|(name, t, m)| {
                let (_, report) = train_and_eval(t, m, eval_opts, dataset)?;
                Ok(AblationRow {
                    name: name.clone(),
                    report,
                })
            })
            .collect()
    })
}

/// Retrain per labeled fraction; identical unlabeled-side losses.
pub fn semi_sweep(
    base_train: &TrainConfig,
    base_model: &ModelConfig,
    eval_opts: &EvalOptions,
    dataset: &MlrDataset,
    fractions: &[f64],
    workers: usize,
) -> Result<Vec<(f64, EvalReport)>> {
    for &f in fractions {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::invalid(format!("fraction {f} outside [0, 1]")));
        }
    }
    with_pool(workers, || {
        fractions
            .par_iter()
            .map(|&fraction| {
                let mut cfg = base_train.clone();
                cfg.labeled_fraction = fraction;
                let (_, report) = train_and_eval(&cfg, base_model, eval_opts, dataset)?;
                Ok((fraction, report))
            })
            .collect()
    })
}
