//! Alternating min-max training.
//!
//! Each step runs two sub-updates on one batch: (a) the discriminators
//! ascend on the adversarial objective over frozen features, then (b)
//! extractor, decoder, and classifier descend on the total loss with the
//! discriminators frozen. The two sub-updates touch provably disjoint
//! parameter sets. Unlabeled records contribute to reconstruction and
//! adversarial terms only.

mod ablation;
mod optim;

pub use ablation::{
    ablation_configs, run_ablation_suite, semi_sweep, train_and_eval, AblationRow, Variant,
};
pub use optim::Adam;

use ndarray::{Array1, Array2, Array4, Axis};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

use crate::datagen::{downsample_upsample, mask_labels, sample_triplet_batch, ImageRecord, MlrDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, records_to_batch, EvalOptions, EvalReport};
use crate::losses::{
    adv_heads, cls_head, minmax_views, rec_head, total_loss, triplet_head, AdvMode, LossBundle,
    LossWeights, MinMaxViews,
};
use crate::model::{ModelConfig, ModelState, ParamGroup, RainModel, GENERATOR_GROUPS};
use crate::nn::global_avg_pool_backward;
use crate::rng::{derive_rng, stream};

fn default_true() -> bool {
    true
}

fn default_rates() -> BTreeSet<u32> {
    [2, 3, 4].into_iter().collect()
}

fn default_clip() -> Option<f64> {
    Some(5.0)
}

fn one() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

/// Everything the training loop needs besides the dataset and the model
/// architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Identities per batch (P).
    pub identities_per_batch: usize,
    /// Images per identity (Q); batch holds P*Q anchors.
    pub images_per_identity: usize,
    /// Learning rate shared by extractor, decoder, and classifier.
    pub lr_main: f64,
    /// Discriminator learning rate.
    pub lr_disc: f64,
    pub margin: f64,
    /// Rates the LR twin of each anchor is synthesized at.
    pub rates: BTreeSet<u32>,
    pub adv: bool,
    pub rec: bool,
    pub cls: bool,
    pub tri: bool,
    pub adv_mode: AdvMode,
    /// When false, train on the HR stream only (no twins, no
    /// adversarial pairs): the "train on HR" baseline.
    pub use_lr_stream: bool,
    pub labeled_fraction: f64,
    pub seed: u64,
    /// Evaluate on query/gallery every N steps (0 = only at the end).
    pub eval_every: usize,
    pub clip_grad_norm: Option<f64>,
    /// Discriminator sub-updates per generator sub-update.
    pub disc_steps: usize,
    pub weights: LossWeights,
    /// Snapshot parameters around each sub-update and count any
    /// cross-group change.
    pub audit_updates: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            identities_per_batch: 4,
            images_per_identity: 2,
            lr_main: 3e-4,
            lr_disc: 1e-4,
            margin: crate::losses::DEFAULT_MARGIN,
            rates: default_rates(),
            adv: default_true(),
            rec: default_true(),
            cls: default_true(),
            tri: default_true(),
            adv_mode: AdvMode::default(),
            use_lr_stream: default_true(),
            labeled_fraction: one_f64(),
            seed: 0,
            eval_every: 0,
            clip_grad_norm: default_clip(),
            disc_steps: one(),
            weights: LossWeights::default(),
            audit_updates: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs: must be >= 1".into()));
        }
        if self.identities_per_batch < 2 {
            return Err(Error::Config("identities_per_batch: must be >= 2".into()));
        }
        if self.images_per_identity < 2 {
            return Err(Error::Config("images_per_identity: must be >= 2".into()));
        }
        if !(self.lr_main > 0.0 && self.lr_disc > 0.0) {
            return Err(Error::Config("lr_main/lr_disc: must be > 0".into()));
        }
        if self.margin <= 0.0 {
            return Err(Error::Config("margin: must be > 0".into()));
        }
        if self.rates.is_empty() {
            return Err(Error::Config("rates: must not be empty".into()));
        }
        if let Some(&r) = self.rates.iter().find(|&&r| r < 1) {
            return Err(Error::Config(format!("rates: invalid rate value {r}")));
        }
        if !(self.adv || self.rec || self.cls || self.tri) {
            return Err(Error::Config(
                "adv/rec/cls/tri: at least one loss must be enabled".into(),
            ));
        }
        if self.adv && !self.use_lr_stream {
            return Err(Error::Config(
                "adv: adversarial alignment needs the LR stream (use_lr_stream = true)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.labeled_fraction) {
            return Err(Error::Config(format!(
                "labeled_fraction: {} outside [0, 1]",
                self.labeled_fraction
            )));
        }
        if self.labeled_fraction == 0.0 && !(self.rec || self.adv) {
            return Err(Error::Config(
                "labeled_fraction: 0 leaves only identity losses, which unlabeled data cannot compute".into(),
            ));
        }
        if self.disc_steps == 0 {
            return Err(Error::Config("disc_steps: must be >= 1".into()));
        }
        if let Some(c) = self.clip_grad_norm {
            if c <= 0.0 {
                return Err(Error::Config("clip_grad_norm: must be > 0".into()));
            }
        }
        let w = &self.weights;
        if w.adv < 0.0 || w.rec < 0.0 || w.cls < 0.0 || w.tri < 0.0 {
            return Err(Error::Config("weights: must be >= 0".into()));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.identities_per_batch * self.images_per_identity
    }

    pub fn steps_for(&self, train_len: usize) -> usize {
        self.epochs * train_len.div_ceil(self.batch_size())
    }
}

/// One sampled batch in tensor form.
pub struct StepBatch {
    pub x_hr: Array4<f64>,
    pub x_lr: Option<Array4<f64>>,
    pub labels: Vec<usize>,
    pub labeled: Vec<bool>,
    pub triples: Vec<(usize, usize, usize)>,
}

/// Deterministic batch for a given step: P*Q anchors plus, when the LR
/// stream is on, a freshly synthesized LR twin per anchor at a rate
/// drawn from `cfg.rates`.
pub fn build_step_batch(
    train: &[ImageRecord],
    cfg: &TrainConfig,
    step: usize,
) -> Result<StepBatch> {
    let mut rng = derive_rng(cfg.seed, &[stream::BATCH, step as u64]);
    let batch = sample_triplet_batch(
        train,
        cfg.identities_per_batch,
        cfg.images_per_identity,
        &mut rng,
    )?;
    let records: Vec<&ImageRecord> = batch.indices.iter().map(|&i| &train[i]).collect();
    let h = records[0].height();
    let w = records[0].width();
    let x_hr = records_to_batch(records.iter().map(|r| &r.hr_pixels), h, w);
    let x_lr = if cfg.use_lr_stream {
        let mut twin_rng = derive_rng(cfg.seed, &[stream::TWIN_RATES, step as u64]);
        let rate_list: Vec<u32> = cfg.rates.iter().copied().collect();
        let twins: Vec<ndarray::Array3<f64>> = records
            .iter()
            .map(|r| {
                let rate = rate_list[twin_rng.random_range(0..rate_list.len())];
                downsample_upsample(&r.hr_pixels, rate)
            })
            .collect::<Result<_>>()?;
        Some(records_to_batch(twins.iter(), h, w))
    } else {
        None
    };
    Ok(StepBatch {
        x_hr,
        x_lr,
        labels: records.iter().map(|r| r.identity).collect(),
        labeled: records.iter().map(|r| r.labeled).collect(),
        triples: batch.triples,
    })
}

use rand::Rng;

/// Output of one optimization step.
pub struct StepOutput {
    pub bundle: LossBundle,
    pub views: MinMaxViews,
    /// Set when auditing: (generator moved during disc update,
    /// discriminator moved during generator update).
    pub audit: Option<(bool, bool)>,
}

/// One alternating min-max step over a batch.
pub fn train_step(
    model: &mut RainModel,
    opt_gen: &mut Adam,
    opt_disc: &mut Adam,
    batch: &StepBatch,
    cfg: &TrainConfig,
) -> Result<StepOutput> {
    let b = batch.x_hr.dim().0;
    let levels: Vec<usize> = model.config.discriminator_levels.iter().copied().collect();
    let last = model.config.num_blocks() - 1;

    if cfg.adv && batch.x_lr.is_none() {
        return Err(Error::Config(
            "adversarial loss enabled without an LR stream".into(),
        ));
    }
    if !batch.labeled.iter().any(|&l| l) && !(cfg.rec || cfg.adv) {
        return Err(Error::Config(
            "batch has no labeled records and only identity losses are enabled".into(),
        ));
    }

    let x = match &batch.x_lr {
        Some(lr) => ndarray::concatenate(Axis(0), &[batch.x_hr.view(), lr.view()])
            .expect("matching shapes"),
        None => batch.x_hr.clone(),
    };
    let pyr = model.extract_train(&x)?;

    // (a) discriminator ascent on the adversarial objective; features
    // are treated as constants (no gradient reaches the extractor).
    let mut audit_gen_moved = false;
    if cfg.adv {
        let gen_before = cfg.audit_updates.then(|| model.snapshot(&GENERATOR_GROUPS));
        for _ in 0..cfg.disc_steps {
            model.zero_group_grads(&[ParamGroup::Discriminators]);
            for &j in &levels {
                let disc = model.discriminators.get_mut(&j).expect("configured level");
                let z = disc.forward_train(&pyr.maps[j - 1]);
                let (z_hr, z_lr) = (z.slice(ndarray::s![..b]), z.slice(ndarray::s![b..]));
                let heads = adv_heads(z_hr, z_lr, cfg.adv_mode);
                let grad_z = stack1(&heads.disc_grad_hr, &heads.disc_grad_lr);
                let _ = disc.backward(&grad_z, true);
            }
            opt_disc.step(model, &[ParamGroup::Discriminators], cfg.clip_grad_norm);
        }
        if let Some(before) = gen_before {
            audit_gen_moved = before != model.snapshot(&GENERATOR_GROUPS);
        }
    }

    // (b) generator descent on the total loss; discriminator parameters
    // receive no gradient at all.
    let disc_before = cfg
        .audit_updates
        .then(|| model.snapshot(&[ParamGroup::Discriminators]));
    model.zero_group_grads(&[
        ParamGroup::Extractor,
        ParamGroup::Decoder,
        ParamGroup::Classifier,
        ParamGroup::Discriminators,
    ]);

    let mut level_grads: Vec<Array4<f64>> = pyr
        .maps
        .iter()
        .map(|m| Array4::zeros(m.raw_dim()))
        .collect();
    let mut adv_values = std::collections::BTreeMap::new();
    let mut gen_adv_total = 0.0;

    if cfg.adv {
        for &j in &levels {
            let disc = model.discriminators.get_mut(&j).expect("configured level");
            let z = disc.forward_train(&pyr.maps[j - 1]);
            let (z_hr, z_lr) = (z.slice(ndarray::s![..b]), z.slice(ndarray::s![b..]));
            let heads = adv_heads(z_hr, z_lr, cfg.adv_mode);
            adv_values.insert(j, heads.value);
            gen_adv_total += heads.gen_loss;
            let grad_z = stack1(&heads.gen_grad_hr, &heads.gen_grad_lr) * cfg.weights.adv;
            level_grads[j - 1] += &disc.backward(&grad_z, false);
        }
    }

    let mut rec_value = 0.0;
    if cfg.rec {
        let recon = model.decoder.forward_train(&pyr.maps[last]);
        let (loss_hr, grad_hr) = rec_head(
            recon.slice(ndarray::s![..b, .., .., ..]),
            batch.x_hr.view(),
        )?;
        rec_value += loss_hr;
        let mut grad_recon = Array4::zeros(recon.raw_dim());
        grad_recon
            .slice_mut(ndarray::s![..b, .., .., ..])
            .assign(&grad_hr);
        if batch.x_lr.is_some() {
            // the LR branch reconstructs the HR ground truth of its twin
            let (loss_lr, grad_lr) = rec_head(
                recon.slice(ndarray::s![b.., .., .., ..]),
                batch.x_hr.view(),
            )?;
            rec_value += loss_lr;
            grad_recon
                .slice_mut(ndarray::s![b.., .., .., ..])
                .assign(&grad_lr);
        }
        grad_recon *= cfg.weights.rec;
        level_grads[last] += &model.decoder.backward(&grad_recon);
    }

    let n_streams = if batch.x_lr.is_some() { 2 } else { 1 };
    let mut grad_v: Array2<f64> = Array2::zeros(pyr.embedding.raw_dim());
    let mut cls_value = 0.0;
    let mut tri_value = 0.0;

    let labeled_rows: Vec<usize> = (0..b).filter(|&i| batch.labeled[i]).collect();

    if cfg.cls {
        let logits = model.classifier.logits_train(&pyr.embedding);
        let mut labels = batch.labels.clone();
        if n_streams == 2 {
            labels.extend_from_slice(&batch.labels);
        }
        let mut grad_logits = Array2::zeros(logits.raw_dim());
        let (loss_hr, g_hr) = cls_head(&logits, &labels, &labeled_rows)?;
        cls_value += loss_hr;
        grad_logits += &g_hr;
        if n_streams == 2 {
            let rows_lr: Vec<usize> = labeled_rows.iter().map(|&i| i + b).collect();
            let (loss_lr, g_lr) = cls_head(&logits, &labels, &rows_lr)?;
            cls_value += loss_lr;
            grad_logits += &g_lr;
        }
        grad_logits *= cfg.weights.cls;
        grad_v += &model.classifier.backward(&grad_logits);
    }

    if cfg.tri {
        // only fully labeled triples contribute
        let triples: Vec<(usize, usize, usize)> = batch
            .triples
            .iter()
            .copied()
            .filter(|&(a, p, n)| batch.labeled[a] && batch.labeled[p] && batch.labeled[n])
            .collect();
        let (loss_hr, g_hr) = triplet_head(&pyr.embedding, &triples, cfg.margin)?;
        tri_value += loss_hr;
        grad_v += &(g_hr * cfg.weights.tri);
        if n_streams == 2 {
            let shifted: Vec<(usize, usize, usize)> = triples
                .iter()
                .map(|&(a, p, n)| (a + b, p + b, n + b))
                .collect();
            let (loss_lr, g_lr) = triplet_head(&pyr.embedding, &shifted, cfg.margin)?;
            tri_value += loss_lr;
            grad_v += &(g_lr * cfg.weights.tri);
        }
    }

    if cfg.cls || cfg.tri {
        let (_, _, fh, fw) = pyr.maps[last].dim();
        level_grads[last] += &global_avg_pool_backward(&grad_v, fh, fw);
    }

    let _ = model.extractor.backward(level_grads);
    opt_gen.step(model, &GENERATOR_GROUPS, cfg.clip_grad_norm);

    let audit = if cfg.audit_updates {
        let disc_moved = disc_before
            .map(|before| before != model.snapshot(&[ParamGroup::Discriminators]))
            .unwrap_or(false);
        Some((audit_gen_moved, disc_moved))
    } else {
        None
    };

    let bundle = total_loss(
        adv_values,
        rec_value,
        cls_value,
        tri_value,
        cfg.margin,
        cfg.weights,
    );
    let views = minmax_views(&bundle, gen_adv_total, cfg.weights);
    Ok(StepOutput {
        bundle,
        views,
        audit,
    })
}

fn stack1(a: &Array1<f64>, b: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(a.len() + b.len());
    out.slice_mut(ndarray::s![..a.len()]).assign(a);
    out.slice_mut(ndarray::s![a.len()..]).assign(b);
    out
}

/// Per-step loss record as written to the metrics stream.
#[derive(Debug, Clone, Serialize)]
pub struct StepMetrics {
    pub step: usize,
    #[serde(flatten)]
    pub bundle: LossBundle,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub steps: Vec<StepMetrics>,
    pub evals: Vec<(usize, EvalReport)>,
    /// Wall-clock per step; kept out of serialized artifacts so outputs
    /// stay byte-deterministic.
    pub wall_ms: Vec<f64>,
    pub audit_violations: usize,
}

impl TrainHistory {
    pub fn write_metrics_jsonl(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for step in &self.steps {
            let line = serde_json::to_string(step).map_err(|e| Error::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Training checkpoint: model state plus optimizer state, enough to
/// resume bit-exactly.
#[derive(Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub version: u32,
    pub step: usize,
    pub model: ModelState,
    pub opt_gen: Adam,
    pub opt_disc: Adam,
}

impl TrainCheckpoint {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self)
            .map_err(|e| Error::Checkpoint(format!("checkpoint serialize: {e}")))?;
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&body).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

pub struct TrainOutcome {
    pub model: RainModel,
    pub history: TrainHistory,
    pub opt_gen: Adam,
    pub opt_disc: Adam,
    pub steps_run: usize,
}

/// Train from scratch.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    eval_opts: &EvalOptions,
    dataset: &MlrDataset,
) -> Result<TrainOutcome> {
    train_from(cfg, model_cfg, eval_opts, dataset, None)
}

/// Train, optionally resuming from a checkpoint. A resumed run replays
/// the remaining steps exactly as the uninterrupted run would, because
/// per-step randomness is derived from `(seed, step)`.
pub fn train_from(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    eval_opts: &EvalOptions,
    dataset: &MlrDataset,
    resume: Option<TrainCheckpoint>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;

    let train_records = mask_labels(&dataset.train, cfg.labeled_fraction, cfg.seed)?;
    let total_steps = cfg.steps_for(train_records.len());

    let (mut model, mut opt_gen, mut opt_disc, start_step) = match resume {
        Some(ckpt) => {
            let model = RainModel::from_state_expecting(&ckpt.model, model_cfg)?;
            (model, ckpt.opt_gen, ckpt.opt_disc, ckpt.step)
        }
        None => (
            RainModel::new(model_cfg.clone(), cfg.seed)?,
            Adam::new(cfg.lr_main),
            Adam::new(cfg.lr_disc),
            0,
        ),
    };

    let mut history = TrainHistory::default();
    for step in start_step..total_steps {
        let t0 = std::time::Instant::now();
        let batch = build_step_batch(&train_records, cfg, step)?;
        let out = train_step(&mut model, &mut opt_gen, &mut opt_disc, &batch, cfg)?;
        if !out.bundle.total.is_finite() {
            return Err(Error::NumericAbort {
                step,
                what: format!("non-finite loss: {:?}", out.bundle),
            });
        }
        if let Some((gen_moved, disc_moved)) = out.audit {
            if gen_moved || disc_moved {
                history.audit_violations += 1;
            }
        }
        history.steps.push(StepMetrics {
            step,
            bundle: out.bundle,
        });
        history.wall_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 && step + 1 < total_steps {
            let report = evaluate(&model, &dataset.query, &dataset.gallery, eval_opts)?;
            history.evals.push((step + 1, report));
        }
    }
    if !model.all_params_finite() {
        return Err(Error::NumericAbort {
            step: total_steps,
            what: "non-finite parameter after final step".into(),
        });
    }
    Ok(TrainOutcome {
        model,
        history,
        opt_gen,
        opt_disc,
        steps_run: total_steps - start_step,
    })
}

/// Package the outcome of a run as a checkpoint.
pub fn checkpoint_of(outcome: &mut TrainOutcome, step: usize) -> TrainCheckpoint {
    TrainCheckpoint {
        version: 1,
        step,
        model: outcome.model.to_state(),
        opt_gen: outcome.opt_gen.clone(),
        opt_disc: outcome.opt_disc.clone(),
    }
}
