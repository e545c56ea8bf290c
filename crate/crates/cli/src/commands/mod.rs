//! One module per subcommand, plus helpers they share.

pub mod analyze;
pub mod eval;
pub mod gen_data;
pub mod generate;
pub mod train;

use std::path::Path;

use radgen_core::data::{pair_views_multi, pair_views_single, Study, TrainingSample};
use radgen_core::text::Vocab;

use crate::{io_at, CliError};

/// Build model samples from studies: one or two views per sample. With
/// context disabled the indication/history sections are dropped first, so
/// the report keeps the full token budget.
pub(crate) fn build_samples(
    studies: &[Study],
    vocab: &Vocab,
    views: usize,
    uses_context: bool,
) -> Result<Vec<TrainingSample>, CliError> {
    let pair: fn(&Study, &Vocab) -> Vec<TrainingSample> = match views {
        1 => pair_views_single,
        2 => pair_views_multi,
        other => {
            return Err(CliError::Usage(format!("views must be 1 or 2, got {other}")));
        }
    };
    let mut out = Vec::new();
    let mut stripped;
    for study in studies {
        let study = if uses_context {
            study
        } else {
            stripped = study.clone();
            stripped.sections.indication.clear();
            stripped.sections.history.clear();
            &stripped
        };
        out.extend(pair(study, vocab));
    }
    Ok(out)
}

/// Every image in `studies` must match the configured side length.
pub(crate) fn check_image_size(studies: &[Study], expected: usize) -> Result<(), CliError> {
    for study in studies {
        for view in &study.views {
            if view.image.size != expected {
                return Err(CliError::Data(format!(
                    "study {}: image is {} px per side, config expects {}",
                    study.study_id, view.image.size, expected
                )));
            }
        }
    }
    Ok(())
}

/// Create `dir` (and parents) if needed.
pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_at(dir, e))
}

/// Write pretty JSON plus a trailing newline.
pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot encode {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_at(path, e))
}

/// Write a text file (CSV and friends).
pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_at(path, e))
}
