//! `eval`: score predictions against references — text metrics plus the
//! four clinical F1 aggregations and a per-label table.

use std::path::{Path, PathBuf};

use radgen_core::data::{Label, LabelVec, NUM_PATHOLOGIES, PATHOLOGIES};
use radgen_core::metrics::{evaluate, label_predictions, EvalReport, MetricsError};
use radgen_core::training::avg_nlg;
use serde::Serialize;

use crate::args::Parsed;
use crate::commands::generate::{PredRec, RefRec};
use crate::commands::{ensure_dir, write_json, write_text};
use crate::runlog::read_jsonl;
use crate::CliError;

const HELP: &str = "usage: radgen eval --predictions <file> --references <file> --out <dir>

Scores predictions.jsonl against references.jsonl (as written by `radgen
generate`; the files must pair line by line). Predicted labels are read off
the generated text with the corpus labeling rules; reference labels come
from the references file. Writes eval.json and per_label.csv under --out.";

#[derive(Serialize)]
struct LabelRow {
    category: String,
    f1: f64,
    precision: f64,
    recall: f64,
    support: usize,
}

#[derive(Serialize)]
struct EvalJson {
    samples: usize,
    bleu1: f64,
    bleu2: f64,
    bleu3: f64,
    bleu4: f64,
    rouge_l: f64,
    meteor: f64,
    avg_nlg: f64,
    f1_macro: f64,
    f1_micro: f64,
    f1_micro5: f64,
    f1_example: f64,
    per_label: Vec<LabelRow>,
}

pub fn run(args: &[String]) -> Result<(), CliError> {
    let p = Parsed::parse(args, &["--predictions", "--references", "--out"], &[], &[])?;
    if p.help {
        println!("{HELP}");
        return Ok(());
    }
    let pred_path = PathBuf::from(p.required("--predictions")?);
    let ref_path = PathBuf::from(p.required("--references")?);
    let out = PathBuf::from(p.required("--out")?);

    let (preds, refs) = load_pair(&pred_path, &ref_path)?;
    let report = score(&preds, &refs)?;
    let json = render(&report, preds.len());

    ensure_dir(&out)?;
    write_json(&out.join("eval.json"), &json)?;
    write_text(&out.join("per_label.csv"), &per_label_csv(&json))?;
    println!(
        "evaluated {} samples: avg_nlg {}, f1_micro {}",
        preds.len(),
        json.avg_nlg,
        json.f1_micro
    );
    Ok(())
}

/// Load both JSONL files and check that they pair line by line.
pub fn load_pair(
    pred_path: &Path,
    ref_path: &Path,
) -> Result<(Vec<PredRec>, Vec<RefRec>), CliError> {
    let preds: Vec<PredRec> = read_jsonl(pred_path)?;
    let refs: Vec<RefRec> = read_jsonl(ref_path)?;
    if preds.is_empty() {
        return Err(CliError::Data(format!("{}: no records", pred_path.display())));
    }
    if preds.len() != refs.len() {
        return Err(CliError::Data(format!(
            "{} predictions but {} references",
            preds.len(),
            refs.len()
        )));
    }
    for (i, (p, r)) in preds.iter().zip(&refs).enumerate() {
        if p.study_id != r.study_id {
            return Err(CliError::Data(format!(
                "line {}: prediction is for study {} but reference is for {}",
                i + 1,
                p.study_id,
                r.study_id
            )));
        }
    }
    Ok((preds, refs))
}

/// Parse a reference record's label names.
pub fn ref_labels(rec: &RefRec) -> Result<LabelVec, CliError> {
    if rec.labels.len() != NUM_PATHOLOGIES {
        return Err(CliError::Data(format!(
            "study {}: {} labels, expected {}",
            rec.study_id,
            rec.labels.len(),
            NUM_PATHOLOGIES
        )));
    }
    let mut out = [Label::Missing; NUM_PATHOLOGIES];
    for (slot, name) in out.iter_mut().zip(&rec.labels) {
        *slot = Label::from_name(name)
            .ok_or_else(|| CliError::Data(format!("study {}: unknown label `{name}`", rec.study_id)))?;
    }
    Ok(out)
}

/// Corpus-level report over paired records.
pub fn score(preds: &[PredRec], refs: &[RefRec]) -> Result<EvalReport, CliError> {
    let candidates: Vec<&[u32]> = preds.iter().map(|p| p.tokens.as_slice()).collect();
    let references: Vec<&[u32]> = refs.iter().map(|r| r.tokens.as_slice()).collect();
    let pred_texts: Vec<&str> = preds.iter().map(|p| p.text.as_str()).collect();
    let pred_labels = label_predictions(&pred_texts);
    let true_labels: Vec<LabelVec> =
        refs.iter().map(ref_labels).collect::<Result<_, CliError>>()?;
    evaluate(&candidates, &references, &pred_labels, &true_labels).map_err(|e| match e {
        MetricsError::EmptyCorpus
        | MetricsError::LengthMismatch { .. }
        | MetricsError::BadOrder { .. } => CliError::Data(e.to_string()),
    })
}

fn render(report: &EvalReport, samples: usize) -> EvalJson {
    EvalJson {
        samples,
        bleu1: report.bleu[0],
        bleu2: report.bleu[1],
        bleu3: report.bleu[2],
        bleu4: report.bleu[3],
        rouge_l: report.rouge_l,
        meteor: report.meteor,
        avg_nlg: avg_nlg(report),
        f1_macro: report.clinical.f1_macro,
        f1_micro: report.clinical.f1_micro,
        f1_micro5: report.clinical.f1_micro5,
        f1_example: report.clinical.f1_example,
        per_label: PATHOLOGIES
            .iter()
            .zip(&report.clinical.per_label)
            .map(|(name, stats)| LabelRow {
                category: name.to_string(),
                f1: stats.f1,
                precision: stats.precision,
                recall: stats.recall,
                support: stats.support,
            })
            .collect(),
    }
}

fn per_label_csv(json: &EvalJson) -> String {
    let mut csv = String::from("Category,F1,P,R,Support\n");
    for row in &json.per_label {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.category, row.f1, row.precision, row.recall, row.support
        ));
    }
    csv
}
