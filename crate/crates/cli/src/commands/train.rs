//! `train`: fit a model on a corpus and leave a self-describing run
//! directory behind.
//!
//! The run directory holds the resolved config, the vocabulary, JSONL step
//! and validation logs, one checkpoint per validation, a curriculum audit
//! CSV, and a summary naming the best checkpoint by averaged text metrics.

use std::path::{Path, PathBuf};

use radgen_core::curriculum::{assign_bins, epoch_sample_weights, sample_epoch};
use radgen_core::data::{build_context, build_report, Split, Study, TrainingSample};
use radgen_core::rng::Rng;
use radgen_core::text::Vocab;
use radgen_core::training::{
    epoch_plan, train, RunState, TrainConfig, CURRICULUM_STREAM,
};
use serde::Serialize;

use crate::args::Parsed;
use crate::commands::{build_samples, check_image_size, ensure_dir, write_json, write_text};
use crate::config;
use crate::executor::RayonExecutor;
use crate::runlog::FileSink;
use crate::{manifest, note, CliError};

const HELP: &str = "usage: radgen train --config <toy|paper|path> --data <manifest|dir> --out <dir>
                 [--single-view] [--no-context] [--no-curriculum] [--no-cls]

Trains on the manifest's train split, validating on its validation split.
Flags override the config: --single-view pairs one frontal image per sample
instead of two views, --no-context drops the indication/history prefix,
--no-curriculum replaces length-curriculum sampling with plain shuffling,
and --no-cls removes the pathology classification heads (and their loss).

The run directory receives config.json, vocab.json, train_log.jsonl,
validations.jsonl, checkpoints/, curriculum.csv (when the curriculum is on),
and summary.json. Reruns with the same config, flags, and data are
byte-identical. `radgen --help` lists every config key.";

#[derive(Serialize)]
struct BestSummary {
    index: usize,
    epoch: usize,
    avg_nlg: f64,
    checkpoint: String,
}

#[derive(Serialize)]
struct Summary {
    data: String,
    train_samples: usize,
    val_samples: usize,
    vocab_size: usize,
    epochs_run: usize,
    steps_run: usize,
    samples_seen: usize,
    validations: usize,
    stopped_early: bool,
    best: Option<BestSummary>,
}

pub fn run(args: &[String]) -> Result<(), CliError> {
    let p = Parsed::parse(
        args,
        &["--config", "--data", "--out"],
        &[],
        &["--single-view", "--no-context", "--no-curriculum", "--no-cls"],
    )?;
    if p.help {
        println!("{HELP}");
        return Ok(());
    }
    let mut cfg = config::load(p.required("--config")?)?;
    if p.switch("--single-view") {
        cfg.views = 1;
    }
    if p.switch("--no-context") {
        cfg.context = false;
    }
    if p.switch("--no-curriculum") {
        cfg.curriculum = false;
    }
    if p.switch("--no-cls") {
        cfg.classifier = false;
    }
    let data = PathBuf::from(p.required("--data")?);
    let out = PathBuf::from(p.required("--out")?);

    let studies = manifest::load(&data)?;
    let train_studies: Vec<Study> =
        studies.iter().filter(|s| s.split == Split::Train).cloned().collect();
    let val_studies: Vec<Study> =
        studies.iter().filter(|s| s.split == Split::Validation).cloned().collect();
    if train_studies.is_empty() {
        return Err(CliError::Data(String::from("corpus has no train-split studies")));
    }
    if val_studies.is_empty() {
        return Err(CliError::Data(String::from("corpus has no validation-split studies")));
    }
    check_image_size(&studies, cfg.image_size)?;

    // The vocabulary comes from the train split only (report + context
    // text), so it is independent of the ablation flags.
    let texts: Vec<String> = train_studies
        .iter()
        .flat_map(|s| [build_report(s), build_context(s)])
        .collect();
    let vocab = Vocab::build(texts.iter().map(String::as_str));

    let train_samples = build_samples(&train_studies, &vocab, cfg.views, cfg.context)?;
    let val_samples = build_samples(&val_studies, &vocab, cfg.views, cfg.context)?;
    note(&format!(
        "{} train samples, {} validation samples, {} vocabulary tokens",
        train_samples.len(),
        val_samples.len(),
        vocab.len()
    ));

    let mut model =
        radgen_core::model::Model::new(cfg.model_config(vocab.len()), cfg.seed)?;
    let train_config = cfg.train_config();
    train_config.validate()?;

    ensure_dir(&out)?;
    write_json(&out.join("config.json"), &cfg)?;
    write_json(&out.join("vocab.json"), &vocab.tokens())?;

    let mut sink = FileSink::create(&out, &vocab, cfg.context)?;
    let outcome = train(
        &mut model,
        &train_samples,
        &val_samples,
        &vocab,
        &train_config,
        &RayonExecutor,
        &mut sink,
    );
    let finish = sink.finish();
    let state = outcome.map_err(CliError::from)?;
    finish?;

    if cfg.curriculum {
        let csv = curriculum_audit(&train_samples, &train_config, state.epochs_run)?;
        write_text(&out.join("curriculum.csv"), &csv)?;
    }
    write_summary(&out, &data, &vocab, &train_samples, &val_samples, &state)?;

    match state.best_record() {
        Some(best) => println!(
            "trained {} epochs ({} steps); best avg_nlg {} at {}",
            state.epochs_run,
            state.steps_run,
            best.avg_nlg,
            out.join(&best.checkpoint).display()
        ),
        None => println!(
            "trained {} epochs ({} steps); no validation was reached",
            state.epochs_run, state.steps_run
        ),
    }
    Ok(())
}

/// Re-derive every epoch's curriculum draw (same seed, same streams as the
/// trainer) and tabulate expected bin mass against realized counts.
fn curriculum_audit(
    samples: &[TrainingSample],
    config: &TrainConfig,
    epochs_run: usize,
) -> Result<String, CliError> {
    let plan = config
        .curriculum
        .as_ref()
        .expect("audit is only written for curriculum runs");
    let curr = |e: radgen_core::curriculum::CurriculumError| CliError::Data(e.to_string());
    let lengths: Vec<usize> = samples.iter().map(|s| s.report_length).collect();
    let bins = assign_bins(&lengths, plan.bins).map_err(curr)?;
    let (total_epochs, _) = epoch_plan(config);

    let mut csv = String::from("epoch,bin,expected_mass,realized_count\n");
    for epoch in 1..=epochs_run {
        let weights = epoch_sample_weights(&bins, plan.bins, epoch, total_epochs).map_err(curr)?;
        let mut rng = Rng::for_stream(config.seed, CURRICULUM_STREAM.wrapping_add(epoch as u64));
        let order = sample_epoch(&weights, plan.fraction, &mut rng).map_err(curr)?;
        // Expected share of the epoch's draws per bin: each sample carries
        // its bin's weight, normalized here across the whole corpus.
        let mut mass = vec![0.0; plan.bins];
        for (i, w) in weights.iter().enumerate() {
            mass[bins[i] - 1] += w;
        }
        let total: f64 = mass.iter().sum();
        let mut counts = vec![0usize; plan.bins];
        for &i in &order {
            counts[bins[i] - 1] += 1;
        }
        for b in 0..plan.bins {
            csv.push_str(&format!("{epoch},{},{},{}\n", b + 1, mass[b] / total, counts[b]));
        }
    }
    Ok(csv)
}

fn write_summary(
    out: &Path,
    data: &Path,
    vocab: &Vocab,
    train_samples: &[TrainingSample],
    val_samples: &[TrainingSample],
    state: &RunState,
) -> Result<(), CliError> {
    let summary = Summary {
        data: data.display().to_string(),
        train_samples: train_samples.len(),
        val_samples: val_samples.len(),
        vocab_size: vocab.len(),
        epochs_run: state.epochs_run,
        steps_run: state.steps_run,
        samples_seen: state.samples_seen,
        validations: state.validations.len(),
        stopped_early: state.stopped_early,
        best: state.best_record().map(|r| BestSummary {
            index: r.index,
            epoch: r.epoch,
            avg_nlg: r.avg_nlg,
            checkpoint: r.checkpoint.clone(),
        }),
    };
    write_json(&out.join("summary.json"), &summary)
}
