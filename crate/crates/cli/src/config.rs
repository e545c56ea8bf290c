//! Run configuration: every model, training, and curriculum hyperparameter
//! plus the seed, with `toy` and `paper` presets.
//!
//! Config files are plain `key = value` lines (`#` comments allowed) or a
//! JSON object with the same keys; either may name a `preset` to start
//! from (default `toy`). Unknown keys are rejected. The resolved config is
//! echoed into the run directory as `config.json`.

use radgen_core::model::ModelConfig;
use radgen_core::training::{CurriculumPlan, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn parse_usize(key: &str, raw: &str) -> Result<usize, CliError> {
    raw.parse().map_err(|_| CliError::Usage(format!("config key {key}: `{raw}` is not a count")))
}

fn parse_u64(key: &str, raw: &str) -> Result<u64, CliError> {
    raw.parse().map_err(|_| CliError::Usage(format!("config key {key}: `{raw}` is not an integer")))
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, CliError> {
    raw.parse().map_err(|_| CliError::Usage(format!("config key {key}: `{raw}` is not a number")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, CliError> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::Usage(format!("config key {key}: `{raw}` is not true/false"))),
    }
}

/// Declares every config key exactly once: the resolved struct, the partial
/// overlay parsed from files, the key=value setter, and the help table all
/// come from this list.
macro_rules! run_config_keys {
    ($($field:ident : $ty:ty, $parse:ident, $doc:expr;)+) => {
        /// A fully resolved run configuration.
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct RunConfig {
            $(pub $field: $ty,)+
        }

        /// A partial configuration read from a file; unset keys fall back
        /// to the preset.
        #[derive(Debug, Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Overlay {
            preset: Option<String>,
            $($field: Option<$ty>,)+
        }

        impl Overlay {
            fn apply(self, base: RunConfig) -> RunConfig {
                RunConfig {
                    $($field: self.$field.unwrap_or(base.$field),)+
                }
            }

            fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
                match key {
                    "preset" => {
                        self.preset = Some(raw.to_string());
                        Ok(())
                    }
                    $(stringify!($field) => {
                        self.$field = Some($parse(key, raw)?);
                        Ok(())
                    })+
                    _ => Err(CliError::Usage(format!("unknown config key `{key}`"))),
                }
            }
        }

        /// One line per config key, for `--help`.
        pub fn key_help() -> String {
            let mut s = format!("  {:<17} {}\n", "preset", "starting point: toy or paper (default toy)");
            $(s.push_str(&format!("  {:<17} {}\n", stringify!($field), $doc));)+
            s.pop();
            s
        }
    };
}

run_config_keys! {
    image_size: usize, parse_usize, "square image side in pixels";
    patch_size: usize, parse_usize, "square patch side; must divide image_size";
    enc_depth: usize, parse_usize, "encoder transformer layers";
    enc_width: usize, parse_usize, "encoder embedding width";
    enc_heads: usize, parse_usize, "encoder attention heads";
    dec_depth: usize, parse_usize, "decoder transformer layers";
    dec_width: usize, parse_usize, "decoder embedding width";
    dec_heads: usize, parse_usize, "decoder attention heads";
    max_text_tokens: usize, parse_usize, "combined context + report token budget";
    views: usize, parse_usize, "views per sample: 1 or 2";
    classifier: bool, parse_bool, "attach the 14 pathology heads";
    context: bool, parse_bool, "feed indication/history tokens as a prefix";
    batch_size: usize, parse_usize, "samples per optimizer step";
    epochs: usize, parse_usize, "effective epoch budget";
    lr: f64, parse_f64, "AdamW learning rate";
    weight_decay: f64, parse_f64, "AdamW decoupled weight decay";
    w_cls: f64, parse_f64, "classification loss weight";
    patience: usize, parse_usize, "validations without improvement before stopping";
    validation_cap: usize, parse_usize, "max validation samples scored per validation";
    seed: u64, parse_u64, "run seed (parameters, shuffling, sampling)";
    curriculum: bool, parse_bool, "length-curriculum sampling on/off";
    bins: usize, parse_usize, "curriculum length bins";
    fraction: f64, parse_f64, "fraction of the corpus sampled per epoch";
}

/// Desk-scale defaults: small model, short schedule.
pub fn toy() -> RunConfig {
    RunConfig {
        image_size: 32,
        patch_size: 8,
        enc_depth: 2,
        enc_width: 64,
        enc_heads: 4,
        dec_depth: 2,
        dec_width: 64,
        dec_heads: 4,
        max_text_tokens: 192,
        views: 2,
        classifier: true,
        context: true,
        batch_size: 8,
        epochs: 8,
        lr: 5e-4,
        weight_decay: 0.01,
        w_cls: 0.1,
        patience: 8,
        validation_cap: 256,
        seed: 0,
        curriculum: true,
        bins: 10,
        fraction: 0.25,
    }
}

/// The published training schedule (batch 32, lr 5e-5, 30 effective epochs,
/// 10 bins at f=0.25, patience 7) on the same desk-scale model.
pub fn paper() -> RunConfig {
    RunConfig {
        batch_size: 32,
        epochs: 30,
        lr: 5e-5,
        patience: 7,
        ..toy()
    }
}

fn preset(name: &str) -> Result<RunConfig, CliError> {
    match name {
        "toy" => Ok(toy()),
        "paper" => Ok(paper()),
        other => Err(CliError::Usage(format!("unknown preset `{other}` (toy or paper)"))),
    }
}

/// Resolve `--config`: a preset name, or a path to a key=value or JSON file.
pub fn load(arg: &str) -> Result<RunConfig, CliError> {
    if let Ok(cfg) = preset(arg) {
        return Ok(cfg);
    }
    let path = std::path::Path::new(arg);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config {arg}: {e} (and not a preset name)")))?;
    let overlay = if text.trim_start().starts_with('{') {
        serde_json::from_str::<Overlay>(&text)
            .map_err(|e| CliError::Usage(format!("config {arg}: {e}")))?
    } else {
        parse_kv(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("config {arg}: {m}")),
            other => other,
        })?
    };
    let base = preset(overlay.preset.as_deref().unwrap_or("toy"))?;
    Ok(overlay.apply(base))
}

fn parse_kv(text: &str) -> Result<Overlay, CliError> {
    let mut overlay = Overlay::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("line {}: expected key = value", i + 1)));
        };
        overlay.set(key.trim(), value.trim())?;
    }
    Ok(overlay)
}

impl RunConfig {
    /// The model part, for a vocabulary of `vocab_size` tokens.
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            image_size: self.image_size,
            patch_size: self.patch_size,
            enc_depth: self.enc_depth,
            enc_width: self.enc_width,
            enc_heads: self.enc_heads,
            dec_depth: self.dec_depth,
            dec_width: self.dec_width,
            dec_heads: self.dec_heads,
            vocab_size,
            max_text_tokens: self.max_text_tokens,
            views: self.views,
            classifier: self.classifier,
        }
    }

    /// The training-loop part.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr: self.lr,
            weight_decay: self.weight_decay,
            w_cls: self.w_cls,
            curriculum: self
                .curriculum
                .then_some(CurriculumPlan { bins: self.bins, fraction: self.fraction }),
            patience: self.patience,
            validation_cap: self.validation_cap,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(tag: &str, text: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!("radgen-config-{tag}-{}.cfg", std::process::id()));
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn presets_resolve_and_differ_where_documented() {
        let toy = load("toy").unwrap();
        let paper = load("paper").unwrap();
        assert_eq!(toy.batch_size, 8);
        assert_eq!(paper.batch_size, 32);
        assert_eq!(paper.lr, 5e-5);
        assert_eq!(paper.patience, 7);
        assert_eq!(toy.image_size, paper.image_size);
        assert!(toy.curriculum && paper.curriculum);
    }

    #[test]
    fn key_value_files_override_their_preset() {
        let path = write_tmp(
            "kv",
            "# comment\npreset = paper\nlr = 1e-3  # inline comment\nbins=5\nclassifier = false\n",
        );
        let cfg = load(path.to_str().unwrap()).unwrap();
        assert_eq!(cfg.batch_size, 32); // from the paper preset
        assert_eq!(cfg.lr, 1e-3);
        assert_eq!(cfg.bins, 5);
        assert!(!cfg.classifier);
        std::fs::remove_file(path).unwrap();
    }

    #[test]
    fn json_files_override_their_preset() {
        let path = write_tmp("json", r#"{"preset": "toy", "epochs": 2, "curriculum": false}"#);
        let cfg = load(path.to_str().unwrap()).unwrap();
        assert_eq!(cfg.epochs, 2);
        assert!(!cfg.curriculum);
        assert!(cfg.train_config().curriculum.is_none());
        std::fs::remove_file(path).unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        for text in ["learning_rate = 1e-3\n", "lr = fast\n", "views\n"] {
            let path = write_tmp("bad", text);
            assert!(matches!(load(path.to_str().unwrap()), Err(CliError::Usage(_))), "{text}");
            std::fs::remove_file(path).unwrap();
        }
        let path = write_tmp("badjson", r#"{"learning_rate": 0.1}"#);
        assert!(matches!(load(path.to_str().unwrap()), Err(CliError::Usage(_))));
        std::fs::remove_file(path).unwrap();
    }

    #[test]
    fn unknown_presets_are_usage_errors() {
        assert!(matches!(load("huge"), Err(CliError::Usage(_))));
        let path = write_tmp("preset", "preset = huge\n");
        assert!(matches!(load(path.to_str().unwrap()), Err(CliError::Usage(_))));
        std::fs::remove_file(path).unwrap();
    }

    #[test]
    fn help_lists_every_config_key() {
        let help = key_help();
        let value = serde_json::to_value(toy()).unwrap();
        for key in value.as_object().unwrap().keys() {
            assert!(help.contains(key), "help is missing `{key}`");
        }
        assert!(help.contains("preset"));
    }

    #[test]
    fn resolved_configs_round_trip_through_json() {
        let cfg = paper();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn derived_core_configs_validate() {
        for cfg in [toy(), paper()] {
            cfg.model_config(64).validate().unwrap();
            cfg.train_config().validate().unwrap();
        }
    }
}
