//! `generate`: decode reports for one split of a corpus using a trained
//! checkpoint, writing paired prediction/reference JSONL files.

use std::path::PathBuf;

use radgen_core::data::{Split, Study, TrainingSample};
use radgen_core::text::TokenSeq;
use radgen_core::training::BatchExecutor;
use serde::{Deserialize, Serialize};

use crate::args::Parsed;
use crate::commands::{build_samples, check_image_size, ensure_dir};
use crate::executor::RayonExecutor;
use crate::{checkpoint, io_at, manifest, note, CliError};

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REFERENCES_FILE: &str = "references.jsonl";

const HELP: &str = "usage: radgen generate --checkpoint <file> --data <manifest|dir>
                    --split <train|validation|test> --out <dir>

Greedy-decodes a report for every sample of the chosen split and writes
predictions.jsonl plus references.jsonl under --out. Lines are paired: line
k of each file describes the same sample. References carry the study's
ground-truth labels; predictions are text and tokens only. View pairing and
context usage follow the checkpoint's training configuration.";

/// One generated report.
#[derive(Debug, Serialize, Deserialize)]
pub struct PredRec {
    pub study_id: String,
    pub tokens: TokenSeq,
    pub text: String,
}

/// One reference report with its ground-truth labels.
#[derive(Debug, Serialize, Deserialize)]
pub struct RefRec {
    pub study_id: String,
    pub tokens: TokenSeq,
    pub text: String,
    pub labels: Vec<String>,
}

pub fn run(args: &[String]) -> Result<(), CliError> {
    let p = Parsed::parse(args, &["--checkpoint", "--data", "--split", "--out"], &[], &[])?;
    if p.help {
        println!("{HELP}");
        return Ok(());
    }
    let ckpt_path = PathBuf::from(p.required("--checkpoint")?);
    let data = PathBuf::from(p.required("--data")?);
    let out = PathBuf::from(p.required("--out")?);
    let split_name = p.opt("--split").unwrap_or("test");
    let split = Split::from_name(split_name)
        .ok_or_else(|| CliError::Usage(format!("unknown split `{split_name}`")))?;

    let restored = checkpoint::load(&ckpt_path)?;
    let studies: Vec<Study> = manifest::load(&data)?
        .into_iter()
        .filter(|s| s.split == split)
        .collect();
    if studies.is_empty() {
        return Err(CliError::Data(format!("corpus has no {split_name}-split studies")));
    }
    check_image_size(&studies, restored.model.config.image_size)?;
    let samples = build_samples(
        &studies,
        &restored.vocab,
        restored.model.config.views,
        restored.uses_context,
    )?;
    if samples.is_empty() {
        return Err(CliError::Data(format!(
            "{split_name} split yields no usable samples (no frontal views?)"
        )));
    }
    note(&format!("decoding {} samples from the {split_name} split", samples.len()));

    let refs: Vec<&TrainingSample> = samples.iter().collect();
    let generated = RayonExecutor
        .map_tokens(&restored.model, &refs)
        .map_err(CliError::from)?;

    ensure_dir(&out)?;
    let mut preds = String::new();
    let mut targets = String::new();
    for (sample, tokens) in samples.iter().zip(&generated) {
        let pred = PredRec {
            study_id: sample.study_id.clone(),
            tokens: tokens.clone(),
            text: restored.vocab.decode(tokens),
        };
        let target = RefRec {
            study_id: sample.study_id.clone(),
            tokens: sample.report.clone(),
            text: restored.vocab.decode(&sample.report),
            labels: sample.labels.iter().map(|l| l.name().to_string()).collect(),
        };
        let encode = |e: serde_json::Error| CliError::Data(format!("cannot encode record: {e}"));
        preds.push_str(&serde_json::to_string(&pred).map_err(encode)?);
        preds.push('\n');
        targets.push_str(&serde_json::to_string(&target).map_err(encode)?);
        targets.push('\n');
    }
    let pred_path = out.join(PREDICTIONS_FILE);
    std::fs::write(&pred_path, preds).map_err(|e| io_at(&pred_path, e))?;
    let ref_path = out.join(REFERENCES_FILE);
    std::fs::write(&ref_path, targets).map_err(|e| io_at(&ref_path, e))?;
    println!("decoded {} samples into {}", samples.len(), out.display());
    Ok(())
}
