//! Experiment orchestration: spec files, dataset construction, and the
//! synthesize -> train -> evaluate -> report pipeline behind the CLI.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::datagen::{
    load_dataset, load_image_dir, make_toy_corpus, synthesize_mlr, MlrDataset, MlrOptions,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, EvalReport};
use crate::model::ModelConfig;
use crate::rng::fnv1a64;
use crate::training::{checkpoint_of, train, TrainConfig};

fn default_version() -> u32 {
    1
}

fn d_num_identities() -> usize {
    20
}
fn d_images_per_identity() -> usize {
    8
}
fn d_side() -> usize {
    32
}
fn d_train_fraction() -> f64 {
    0.5
}
fn d_lr_cameras() -> BTreeSet<u32> {
    [1].into_iter().collect()
}
fn d_rates() -> BTreeSet<u32> {
    [2, 3, 4].into_iter().collect()
}

/// Where the dataset comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Procedural toy-identity corpus.
    Toy {
        #[serde(default = "d_num_identities")]
        num_identities: usize,
        #[serde(default = "d_images_per_identity")]
        images_per_identity: usize,
        #[serde(default = "d_side")]
        side: usize,
        #[serde(default = "d_train_fraction")]
        train_fraction: f64,
        #[serde(default = "d_lr_cameras")]
        lr_cameras: BTreeSet<u32>,
        #[serde(default = "d_rates")]
        rates: BTreeSet<u32>,
    },
    /// A JSON-lines manifest written by `rain synth` (or by hand).
    Manifest { path: PathBuf },
    /// A directory tree `root/<identity>/<camera>_<index>.png` of HR
    /// images, synthesized into an MLR dataset at load time.
    ImageDir {
        root: PathBuf,
        #[serde(default = "d_train_fraction")]
        train_fraction: f64,
        #[serde(default = "d_lr_cameras")]
        lr_cameras: BTreeSet<u32>,
        #[serde(default = "d_rates")]
        rates: BTreeSet<u32>,
    },
}

/// Architecture block of a spec; input size and identity count come
/// from the dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelArch {
    pub stem_channels: usize,
    pub block_channels: Vec<usize>,
    pub decoder_channels: Vec<usize>,
    pub disc_channels: Vec<usize>,
    pub discriminator_levels: BTreeSet<usize>,
}

impl Default for ModelArch {
    fn default() -> Self {
        let toy = ModelConfig::toy(2);
        ModelArch {
            stem_channels: toy.stem_channels,
            block_channels: toy.block_channels,
            decoder_channels: toy.decoder_channels,
            disc_channels: toy.disc_channels,
            discriminator_levels: toy.discriminator_levels,
        }
    }
}

impl ModelArch {
    pub fn to_config(&self, input_h: usize, input_w: usize, num_identities: usize) -> ModelConfig {
        ModelConfig {
            input_h,
            input_w,
            stem_channels: self.stem_channels,
            block_channels: self.block_channels.clone(),
            decoder_channels: self.decoder_channels.clone(),
            disc_channels: self.disc_channels.clone(),
            discriminator_levels: self.discriminator_levels.clone(),
            num_identities,
        }
    }
}

fn d_ranks() -> Vec<usize> {
    vec![1, 5, 10, 20]
}
fn d_true() -> bool {
    true
}
fn d_probe_rates() -> Vec<u32> {
    vec![8]
}
fn d_fractions() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub ranks: Vec<usize>,
    pub normalize_embeddings: bool,
    pub probe_rates: Vec<u32>,
    pub semi_fractions: Vec<f64>,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            ranks: d_ranks(),
            normalize_embeddings: d_true(),
            probe_rates: d_probe_rates(),
            semi_fractions: d_fractions(),
        }
    }
}

/// One experiment end to end. Schema version 1; see `docs/config.md`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    pub name: String,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelArch,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSpec,
}

impl ExperimentSpec {
    pub fn from_toml_str(body: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(body)
            .map_err(|e| Error::SpecValidation(format!("spec parse: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&body)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::SpecValidation(msg));
        if self.version != 1 {
            return fail(format!("version: unsupported schema version {}", self.version));
        }
        if self.name.is_empty() {
            return fail("name: must not be empty".into());
        }
        match &self.dataset {
            DatasetSpec::Toy {
                num_identities,
                images_per_identity,
                side,
                train_fraction,
                rates,
                ..
            } => {
                if *num_identities < 2 {
                    return fail(format!("dataset.num_identities: {num_identities} < 2"));
                }
                if *images_per_identity < 2 {
                    return fail(format!(
                        "dataset.images_per_identity: {images_per_identity} < 2"
                    ));
                }
                if *side < 16 {
                    return fail(format!("dataset.side: {side} < 16"));
                }
                if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                    return fail(format!(
                        "dataset.train_fraction: {train_fraction} outside (0, 1)"
                    ));
                }
                if rates.is_empty() {
                    return fail("dataset.rates: must not be empty".into());
                }
                if let Some(&r) = rates.iter().find(|&&r| r < 1) {
                    return fail(format!("dataset.rates: invalid rate value {r}"));
                }
                if let Some(&r) = rates.iter().find(|&&r| r as usize > *side) {
                    return fail(format!(
                        "dataset.rates: rate {r} larger than image side {side}"
                    ));
                }
            }
            DatasetSpec::Manifest { path } => {
                if path.as_os_str().is_empty() {
                    return fail("dataset.path: must not be empty".into());
                }
            }
            DatasetSpec::ImageDir { root, rates, .. } => {
                if root.as_os_str().is_empty() {
                    return fail("dataset.root: must not be empty".into());
                }
                if let Some(&r) = rates.iter().find(|&&r| r < 1) {
                    return fail(format!("dataset.rates: invalid rate value {r}"));
                }
            }
        }
        self.train
            .validate()
            .map_err(|e| Error::SpecValidation(format!("train.{e}")))?;
        if self.eval.ranks.is_empty() {
            return fail("eval.ranks: must not be empty".into());
        }
        if self.eval.ranks.iter().any(|&r| r == 0) {
            return fail("eval.ranks: rank 0 invalid".into());
        }
        for w in self.eval.semi_fractions.windows(2) {
            if w[0] > w[1] {
                return fail("eval.semi_fractions: must be sorted ascending".into());
            }
        }
        if self
            .eval
            .semi_fractions
            .iter()
            .any(|f| !(0.0..=1.0).contains(f))
        {
            return fail("eval.semi_fractions: values outside [0, 1]".into());
        }
        // architecture check against the dataset's input size
        let (side, k) = match &self.dataset {
            DatasetSpec::Toy {
                side,
                num_identities,
                ..
            } => (*side, *num_identities),
            _ => (d_side(), d_num_identities()),
        };
        self.model
            .to_config(side, side, k.max(2))
            .validate()
            .map_err(|e| Error::SpecValidation(format!("model.{e}")))?;
        Ok(())
    }

    /// Seed actually used by a run (CLI override wins).
    pub fn effective_seed(&self, override_seed: Option<u64>) -> u64 {
        override_seed.unwrap_or(self.train.seed)
    }

    /// Stable fingerprint of the spec contents plus the effective seed.
    pub fn fingerprint(&self, seed: u64) -> String {
        let mut spec = self.clone();
        spec.train.seed = seed;
        let canon = serde_json::to_string(&spec).expect("spec serializes");
        format!("{:016x}", fnv1a64(canon.as_bytes()))
    }

    /// Build the dataset this spec describes.
    pub fn build_dataset(&self, seed: u64) -> Result<MlrDataset> {
        match &self.dataset {
            DatasetSpec::Toy {
                num_identities,
                images_per_identity,
                side,
                train_fraction,
                lr_cameras,
                rates,
            } => {
                let corpus = make_toy_corpus(*num_identities, *images_per_identity, *side, seed)?;
                synthesize_mlr(
                    &corpus,
                    &MlrOptions {
                        rates: rates.clone(),
                        lr_cameras: lr_cameras.clone(),
                        train_fraction: *train_fraction,
                        seed,
                    },
                )
            }
            DatasetSpec::Manifest { path } => load_dataset(path),
            DatasetSpec::ImageDir {
                root,
                train_fraction,
                lr_cameras,
                rates,
            } => {
                let records = load_image_dir(root)?;
                synthesize_mlr(
                    &records,
                    &MlrOptions {
                        rates: rates.clone(),
                        lr_cameras: lr_cameras.clone(),
                        train_fraction: *train_fraction,
                        seed,
                    },
                )
            }
        }
    }

    /// Model config for a concrete dataset.
    pub fn model_config(&self, dataset: &MlrDataset) -> Result<ModelConfig> {
        let sample = dataset
            .train
            .first()
            .or(dataset.gallery.first())
            .ok_or_else(|| Error::invalid("dataset has no records"))?;
        Ok(self.model.to_config(
            sample.height(),
            sample.width(),
            dataset.num_identities.max(2),
        ))
    }

    pub fn eval_options(&self, fingerprint: String) -> EvalOptions {
        EvalOptions {
            ranks: self.eval.ranks.clone(),
            normalize: self.eval.normalize_embeddings,
            fingerprint,
        }
    }
}

/// Result summary of `run`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub fingerprint: String,
    pub steps: usize,
    pub rank1: f64,
    pub map: f64,
    pub report_path: PathBuf,
}

/// Execute a spec end to end and write all artifacts under `out_dir`:
/// `metrics.jsonl`, `eval/step_*.json`, `checkpoint.final`,
/// `report.json`.
pub fn run(spec: &ExperimentSpec, out_dir: &Path, seed: Option<u64>) -> Result<RunSummary> {
    spec.validate()?;
    let seed = spec.effective_seed(seed);
    let fingerprint = spec.fingerprint(seed);
    let mut train_cfg = spec.train.clone();
    train_cfg.seed = seed;

    let dataset = spec.build_dataset(seed)?;
    let model_cfg = spec.model_config(&dataset)?;
    let eval_opts = spec.eval_options(fingerprint.clone());

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut outcome = train(&train_cfg, &model_cfg, &eval_opts, &dataset)?;

    outcome
        .history
        .write_metrics_jsonl(&out_dir.join("metrics.jsonl"))?;
    let eval_dir = out_dir.join("eval");
    std::fs::create_dir_all(&eval_dir).map_err(|e| Error::io(&eval_dir, e))?;
    for (step, report) in &outcome.history.evals {
        report.write_json(&eval_dir.join(format!("step_{step}.json")))?;
    }
    let report = evaluate(&outcome.model, &dataset.query, &dataset.gallery, &eval_opts)?;
    let report_path = out_dir.join("report.json");
    report.write_json(&report_path)?;
    let steps = outcome.steps_run;
    checkpoint_of(&mut outcome, steps).write_json(&out_dir.join("checkpoint.final"))?;

    Ok(RunSummary {
        name: spec.name.clone(),
        fingerprint,
        steps,
        rank1: report.rank1(),
        map: report.map,
        report_path,
    })
}

/// Write ablation rows as CSV: name, requested ranks, then mAP.
pub fn write_ablation_csv(
    rows: &[crate::training::AblationRow],
    ranks: &[usize],
    path: &Path,
) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let header: Vec<String> = std::iter::once("name".to_string())
        .chain(ranks.iter().map(|r| format!("rank{r}")))
        .chain(std::iter::once("map".to_string()))
        .collect();
    writeln!(file, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    for row in rows {
        let mut fields = vec![row.name.clone()];
        for r in ranks {
            fields.push(format!("{}", row.report.cmc.get(r).copied().unwrap_or(0.0)));
        }
        fields.push(format!("{}", row.report.map));
        writeln!(file, "{}", fields.join(",")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Write the semi-supervised sweep as CSV: fraction, rank1, map.
pub fn write_semi_csv(rows: &[(f64, EvalReport)], path: &Path) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "fraction,rank1,map").map_err(|e| Error::io(path, e))?;
    for (fraction, report) in rows {
        writeln!(file, "{fraction},{},{}", report.rank1(), report.map)
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
