//! Corpus manifest I/O: one JSON study record per line, images as binary
//! PGM files referenced by relative path.
//!
//! Saving is byte-stable for a fixed corpus (field order is fixed, no
//! timestamps). Loading reports malformed lines with their line number and
//! missing images with their path, and drops studies that carry no report
//! text (neither impression nor findings).

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use radgen_core::data::{Label, LabelVec, Sections, Split, Study, View, ViewTag};
use serde::{Deserialize, Serialize};

use crate::{io_at, note, pgm, CliError};

/// Manifest file name inside a corpus directory.
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Serialize, Deserialize)]
struct SectionsRec {
    impression: String,
    findings: String,
    indication: String,
    history: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ViewRec {
    tag: String,
    image_path: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct StudyRec {
    study_id: String,
    patient_id: String,
    split: String,
    sections: SectionsRec,
    labels: Vec<String>,
    views: Vec<ViewRec>,
}

/// Accept either a corpus directory or a direct path to its manifest file.
pub fn locate(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(MANIFEST_FILE)
    } else {
        data.to_path_buf()
    }
}

/// Write `studies` under `dir`: `manifest.jsonl` plus `images/*.pgm`.
/// Image paths in the manifest are relative to the manifest's directory.
pub fn save(dir: &Path, studies: &[Study]) -> Result<(), CliError> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| io_at(&images, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut manifest =
        std::io::BufWriter::new(std::fs::File::create(&manifest_path).map_err(|e| io_at(&manifest_path, e))?);
    for study in studies {
        let mut views = Vec::with_capacity(study.views.len());
        for (i, view) in study.views.iter().enumerate() {
            let rel = format!("images/{}-{}-{}.pgm", study.study_id, i, view.tag.name());
            pgm::save(&dir.join(&rel), &view.image)?;
            views.push(ViewRec { tag: view.tag.name().to_string(), image_path: rel });
        }
        let rec = StudyRec {
            study_id: study.study_id.clone(),
            patient_id: study.patient_id.clone(),
            split: study.split.name().to_string(),
            sections: SectionsRec {
                impression: study.sections.impression.clone(),
                findings: study.sections.findings.clone(),
                indication: study.sections.indication.clone(),
                history: study.sections.history.clone(),
            },
            labels: study.labels.iter().map(|l| l.name().to_string()).collect(),
            views,
        };
        let line = serde_json::to_string(&rec)
            .map_err(|e| CliError::Data(format!("cannot encode study record: {e}")))?;
        manifest
            .write_all(line.as_bytes())
            .and_then(|()| manifest.write_all(b"\n"))
            .map_err(|e| io_at(&manifest_path, e))?;
    }
    manifest.flush().map_err(|e| io_at(&manifest_path, e))?;
    Ok(())
}

/// Load a manifest (directory or file path) and its images.
pub fn load(data: &Path) -> Result<Vec<Study>, CliError> {
    let path = locate(data);
    let file = std::fs::File::open(&path).map_err(|e| io_at(&path, e))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut studies = Vec::new();
    let mut dropped = 0usize;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| io_at(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| CliError::Data(format!("{}:{lineno}: {msg}", path.display()));
        let rec: StudyRec =
            serde_json::from_str(&line).map_err(|e| at(format!("malformed study record: {e}")))?;
        let study = decode_record(rec, &base).map_err(at)?;
        if study.has_report() {
            studies.push(study);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        note(&format!("dropped {dropped} studies with no report text"));
    }
    Ok(studies)
}

fn decode_record(rec: StudyRec, base: &Path) -> Result<Study, String> {
    let split = Split::from_name(&rec.split).ok_or(format!("unknown split `{}`", rec.split))?;
    if rec.labels.len() != radgen_core::data::NUM_PATHOLOGIES {
        return Err(format!(
            "study {} has {} labels, expected {}",
            rec.study_id,
            rec.labels.len(),
            radgen_core::data::NUM_PATHOLOGIES
        ));
    }
    let mut labels: LabelVec = [Label::Missing; radgen_core::data::NUM_PATHOLOGIES];
    for (slot, name) in labels.iter_mut().zip(&rec.labels) {
        *slot = Label::from_name(name).ok_or(format!("unknown label `{name}`"))?;
    }
    let mut views = Vec::with_capacity(rec.views.len());
    for v in rec.views {
        let tag = ViewTag::from_name(&v.tag).ok_or(format!("unknown view tag `{}`", v.tag))?;
        let image = pgm::load(&base.join(&v.image_path)).map_err(|e| match e {
            // Keep the inner message: it already names the missing path.
            CliError::Data(m) | CliError::Usage(m) | CliError::Numeric(m) => m,
        })?;
        views.push(View { tag, image });
    }
    Ok(Study {
        study_id: rec.study_id,
        patient_id: rec.patient_id,
        views,
        sections: Sections {
            impression: rec.sections.impression,
            findings: rec.sections.findings,
            indication: rec.sections.indication,
            history: rec.sections.history,
        },
        labels,
        split,
    })
}
