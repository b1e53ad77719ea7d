//! Command-line entry point.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use rain::datagen::{load_dataset, save_dataset};
use rain::error::{Error, Result};
use rain::eval::{evaluate, export_embeddings_csv, EvalOptions};
use rain::model::RainModel;
use rain::pipeline::{self, ExperimentSpec};
use rain::training::{run_ablation_suite, semi_sweep, TrainCheckpoint};

#[derive(Parser)]
#[command(
    name = "rain",
    about = "Cross-resolution person re-identification: dataset synthesis, adversarial training, and single-shot retrieval evaluation",
    version
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Override the spec's training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parallel workers for suite commands (independent runs only;
    /// results do not depend on this).
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Keep every run single-threaded internally (always the case; the
    /// flag is accepted for interface stability).
    #[arg(long, global = true, default_value_t = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the spec's dataset and write PNGs plus a manifest.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train per the spec and write checkpoint, metrics, and reports.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint against a dataset manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated CMC ranks.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 5, 10, 20])]
        ranks: Vec<usize>,
        /// Compare raw embeddings instead of L2-normalized ones.
        #[arg(long)]
        raw_distances: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate every ablation variant of the spec.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain across labeled fractions and emit the sweep CSV.
    SemiSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated labeled fractions; defaults to the spec's.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Dump embeddings of a manifest's records to CSV.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Which split to embed: train, query, gallery, or all.
        #[arg(long, default_value = "query")]
        split: String,
        #[arg(long)]
        raw_distances: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: synthesize, train, evaluate, report.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_checkpoint_model(path: &PathBuf) -> Result<RainModel> {
    let ckpt = TrainCheckpoint::read_json(path)?;
    RainModel::from_state(&ckpt.model)
}

fn dispatch(cli: Cli) -> Result<()> {
    let workers = cli.global.workers.max(1);
    match cli.command {
        Command::Synth { spec, out } => {
            let spec = ExperimentSpec::from_file(&spec)?;
            let seed = spec.effective_seed(cli.global.seed);
            let dataset = spec.build_dataset(seed)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let manifest = save_dataset(&out, &dataset)?;
            println!(
                "dataset written: {} train / {} query / {} gallery -> {}",
                dataset.train.len(),
                dataset.query.len(),
                dataset.gallery.len(),
                manifest.display()
            );
            Ok(())
        }
        Command::Train { config, out } | Command::Run { spec: config, out } => {
            let spec = ExperimentSpec::from_file(&config)?;
            let summary = pipeline::run(&spec, &out, cli.global.seed)?;
            println!(
                "{}: {} steps, rank-1 {:.1}%, mAP {:.3} -> {}",
                summary.name,
                summary.steps,
                summary.rank1,
                summary.map,
                summary.report_path.display()
            );
            Ok(())
        }
        Command::Eval {
            checkpoint,
            dataset,
            ranks,
            raw_distances,
            out,
        } => {
            let model = load_checkpoint_model(&checkpoint)?;
            let ds = load_dataset(&dataset)?;
            let opts = EvalOptions {
                ranks,
                normalize: !raw_distances,
                fingerprint: String::new(),
            };
            let report = evaluate(&model, &ds.query, &ds.gallery, &opts)?;
            report.write_json(&out)?;
            println!(
                "rank-1 {:.1}%, mAP {:.3} over {} queries -> {}",
                report.rank1(),
                report.map,
                report.num_query,
                out.display()
            );
            Ok(())
        }
        Command::Ablate { config, out } => {
            let spec = ExperimentSpec::from_file(&config)?;
            let seed = spec.effective_seed(cli.global.seed);
            let mut train_cfg = spec.train.clone();
            train_cfg.seed = seed;
            let dataset = spec.build_dataset(seed)?;
            let model_cfg = spec.model_config(&dataset)?;
            let eval_opts = spec.eval_options(spec.fingerprint(seed));
            let rows = run_ablation_suite(&train_cfg, &model_cfg, &eval_opts, &dataset, workers)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            pipeline::write_ablation_csv(&rows, &eval_opts.ranks, &out.join("ablation.csv"))?;
            for row in &rows {
                row.report
                    .write_json(&out.join(format!("report_{}.json", row.name)))?;
                println!(
                    "{:<14} rank-1 {:5.1}%  mAP {:.3}",
                    row.name,
                    row.report.rank1(),
                    row.report.map
                );
            }
            Ok(())
        }
        Command::SemiSweep {
            config,
            out,
            fractions,
        } => {
            let spec = ExperimentSpec::from_file(&config)?;
            let seed = spec.effective_seed(cli.global.seed);
            let mut train_cfg = spec.train.clone();
            train_cfg.seed = seed;
            let dataset = spec.build_dataset(seed)?;
            let model_cfg = spec.model_config(&dataset)?;
            let eval_opts = spec.eval_options(spec.fingerprint(seed));
            let fractions = fractions.unwrap_or_else(|| spec.eval.semi_fractions.clone());
            let rows = semi_sweep(
                &train_cfg,
                &model_cfg,
                &eval_opts,
                &dataset,
                &fractions,
                workers,
            )?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            pipeline::write_semi_csv(&rows, &out.join("semi_sweep.csv"))?;
            for (fraction, report) in &rows {
                println!(
                    "labeled {:>4.0}%  rank-1 {:5.1}%  mAP {:.3}",
                    fraction * 100.0,
                    report.rank1(),
                    report.map
                );
            }
            Ok(())
        }
        Command::ExportEmbeddings {
            checkpoint,
            dataset,
            split,
            raw_distances,
            out,
        } => {
            let model = load_checkpoint_model(&checkpoint)?;
            let ds = load_dataset(&dataset)?;
            let records: Vec<_> = match split.as_str() {
                "train" => ds.train.clone(),
                "query" => ds.query.clone(),
                "gallery" => ds.gallery.clone(),
                "all" => ds
                    .train
                    .iter()
                    .chain(ds.query.iter())
                    .chain(ds.gallery.iter())
                    .cloned()
                    .collect(),
                other => {
                    return Err(Error::SpecValidation(format!(
                        "split: unknown value {other:?} (use train, query, gallery, or all)"
                    )))
                }
            };
            export_embeddings_csv(&model, &records, !raw_distances, &out)?;
            println!("{} embeddings -> {}", records.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
