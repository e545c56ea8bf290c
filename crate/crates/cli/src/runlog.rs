//! Run-directory logging: JSONL step and validation records, plus the
//! training sink that writes them and saves checkpoints.
//!
//! Records carry no timestamps or hostnames, so identical runs produce
//! byte-identical logs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use radgen_core::metrics::EvalReport;
use radgen_core::text::Vocab;
use radgen_core::training::{StepLog, TrainSink, ValidationEvent};
use serde::{Deserialize, Serialize};

use crate::{checkpoint, io_at, CliError};

pub const STEP_LOG: &str = "train_log.jsonl";
pub const VALIDATION_LOG: &str = "validations.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// One optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRec {
    pub epoch: usize,
    pub step: usize,
    pub lm_loss: f64,
    pub mlc_loss: f64,
    pub total: f64,
}

/// One validation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValRec {
    pub epoch: usize,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub f1_micro5: f64,
    pub f1_example: f64,
    pub avg_nlg: f64,
    pub checkpoint_path: String,
}

impl ValRec {
    pub fn from_report(epoch: usize, report: &EvalReport, avg_nlg: f64, path: String) -> ValRec {
        ValRec {
            epoch,
            bleu1: report.bleu[0],
            bleu2: report.bleu[1],
            bleu3: report.bleu[2],
            bleu4: report.bleu[3],
            rouge_l: report.rouge_l,
            meteor: report.meteor,
            f1_macro: report.clinical.f1_macro,
            f1_micro: report.clinical.f1_micro,
            f1_micro5: report.clinical.f1_micro5,
            f1_example: report.clinical.f1_example,
            avg_nlg,
            checkpoint_path: path,
        }
    }
}

/// Training sink that writes step/validation logs and checkpoint files
/// under a run directory.
///
/// [`TrainSink`] methods cannot surface errors, so the first failure is
/// parked and returned by [`FileSink::finish`].
pub struct FileSink<'a> {
    run_dir: PathBuf,
    steps: BufWriter<File>,
    validations: BufWriter<File>,
    vocab: &'a Vocab,
    uses_context: bool,
    failure: Option<CliError>,
}

impl<'a> FileSink<'a> {
    pub fn create(run_dir: &Path, vocab: &'a Vocab, uses_context: bool) -> Result<FileSink<'a>, CliError> {
        let ckpt_dir = run_dir.join(CHECKPOINT_DIR);
        std::fs::create_dir_all(&ckpt_dir).map_err(|e| io_at(&ckpt_dir, e))?;
        let steps_path = run_dir.join(STEP_LOG);
        let vals_path = run_dir.join(VALIDATION_LOG);
        Ok(FileSink {
            run_dir: run_dir.to_path_buf(),
            steps: BufWriter::new(File::create(&steps_path).map_err(|e| io_at(&steps_path, e))?),
            validations: BufWriter::new(File::create(&vals_path).map_err(|e| io_at(&vals_path, e))?),
            vocab,
            uses_context,
            failure: None,
        })
    }

    fn park(&mut self, e: CliError) {
        if self.failure.is_none() {
            self.failure = Some(e);
        }
    }

    fn write_line<T: Serialize>(&mut self, which: Which, rec: &T) {
        let line = match serde_json::to_string(rec) {
            Ok(l) => l,
            Err(e) => return self.park(CliError::Data(format!("cannot encode log record: {e}"))),
        };
        let sink = match which {
            Which::Step => &mut self.steps,
            Which::Validation => &mut self.validations,
        };
        if let Err(e) = sink.write_all(line.as_bytes()).and_then(|()| sink.write_all(b"\n")) {
            self.park(CliError::Data(format!("cannot write run log: {e}")));
        }
    }

    /// Flush both logs and report any failure seen along the way.
    pub fn finish(mut self) -> Result<(), CliError> {
        if let Err(e) = self.steps.flush().and_then(|()| self.validations.flush()) {
            self.park(CliError::Data(format!("cannot flush run logs: {e}")));
        }
        match self.failure {
            None => Ok(()),
            Some(e) => Err(e),
        }
    }
}

enum Which {
    Step,
    Validation,
}

impl TrainSink for FileSink<'_> {
    fn on_step(&mut self, log: &StepLog) {
        let rec = StepRec {
            epoch: log.epoch,
            step: log.step,
            lm_loss: log.lm_loss,
            mlc_loss: log.mlc_loss,
            total: log.total,
        };
        self.write_line(Which::Step, &rec);
    }

    fn on_validation(&mut self, event: &ValidationEvent<'_>) -> String {
        let rel = format!("{CHECKPOINT_DIR}/checkpoint-{:03}.ckpt", event.index);
        if let Err(e) = checkpoint::save(&self.run_dir.join(&rel), event.model, self.vocab, self.uses_context) {
            self.park(e);
        }
        let rec = ValRec::from_report(event.epoch, event.report, event.avg_nlg, rel.clone());
        self.write_line(Which::Validation, &rec);
        rel
    }
}

/// Read a JSONL file of `T` records, reporting the failing line number.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_at(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| {
            CliError::Data(format!("{}:{}: malformed record: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_reader_round_trips_and_names_bad_lines() {
        let path = std::env::temp_dir().join(format!("radgen-runlog-{}.jsonl", std::process::id()));
        let recs = vec![
            StepRec { epoch: 1, step: 1, lm_loss: 2.5, mlc_loss: 0.5, total: 2.55 },
            StepRec { epoch: 1, step: 2, lm_loss: 2.25, mlc_loss: 0.5, total: 2.3 },
        ];
        let text: String =
            recs.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
        std::fs::write(&path, &text).unwrap();
        let back: Vec<StepRec> = read_jsonl(&path).unwrap();
        assert_eq!(back, recs);

        std::fs::write(&path, text + "not json\n").unwrap();
        let err = read_jsonl::<StepRec>(&path).unwrap_err();
        assert!(matches!(&err, CliError::Data(m) if m.contains(":3:")), "{err:?}");
        std::fs::remove_file(&path).unwrap();
    }
}
