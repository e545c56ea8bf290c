//! Self-contained model checkpoints.
//!
//! Layout: one line of JSON — model config, whether samples carry context
//! tokens, the vocabulary, and a parameter directory of `{name, shape,
//! offset}` — followed by every parameter as little-endian 64-bit floats in
//! name order. Byte offsets index into the blob. Round-trips are bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use radgen_core::model::{Model, ModelConfig, Param, Params};
use radgen_core::text::Vocab;
use serde::{Deserialize, Serialize};

use crate::{io_at, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConfigRec {
    image_size: usize,
    patch_size: usize,
    enc_depth: usize,
    enc_width: usize,
    enc_heads: usize,
    dec_depth: usize,
    dec_width: usize,
    dec_heads: usize,
    vocab_size: usize,
    max_text_tokens: usize,
    views: usize,
    classifier: bool,
}

impl ConfigRec {
    fn from_config(c: &ModelConfig) -> ConfigRec {
        ConfigRec {
            image_size: c.image_size,
            patch_size: c.patch_size,
            enc_depth: c.enc_depth,
            enc_width: c.enc_width,
            enc_heads: c.enc_heads,
            dec_depth: c.dec_depth,
            dec_width: c.dec_width,
            dec_heads: c.dec_heads,
            vocab_size: c.vocab_size,
            max_text_tokens: c.max_text_tokens,
            views: c.views,
            classifier: c.classifier,
        }
    }

    fn into_config(self) -> ModelConfig {
        ModelConfig {
            image_size: self.image_size,
            patch_size: self.patch_size,
            enc_depth: self.enc_depth,
            enc_width: self.enc_width,
            enc_heads: self.enc_heads,
            dec_depth: self.dec_depth,
            dec_width: self.dec_width,
            dec_heads: self.dec_heads,
            vocab_size: self.vocab_size,
            max_text_tokens: self.max_text_tokens,
            views: self.views,
            classifier: self.classifier,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamRec {
    name: String,
    shape: Vec<usize>,
    /// Byte offset of this parameter's floats within the blob.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ConfigRec,
    /// Whether training samples kept their context tokens; generation must
    /// build samples the same way the checkpoint was trained.
    uses_context: bool,
    vocab: Vec<String>,
    params: Vec<ParamRec>,
}

/// A model restored from disk, with everything needed to run it.
#[derive(Debug)]
pub struct Restored {
    pub model: Model,
    pub vocab: Vocab,
    pub uses_context: bool,
}

/// Serialize `model` + `vocab` into checkpoint bytes.
pub fn encode(model: &Model, vocab: &Vocab, uses_context: bool) -> Result<Vec<u8>, CliError> {
    let mut params = Vec::new();
    let mut offset = 0usize;
    for (name, p) in model.params.iter() {
        params.push(ParamRec { name: name.clone(), shape: p.shape.clone(), offset });
        offset += p.data.len() * 8;
    }
    let header = Header {
        config: ConfigRec::from_config(&model.config),
        uses_context,
        vocab: vocab.tokens().to_vec(),
        params,
    };
    let mut out = serde_json::to_string(&header)
        .map_err(|e| CliError::Data(format!("cannot encode checkpoint header: {e}")))?
        .into_bytes();
    out.push(b'\n');
    out.reserve(offset);
    for (_, p) in model.params.iter() {
        for &v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Rebuild a model and vocabulary from checkpoint bytes.
pub fn decode(bytes: &[u8]) -> Result<Restored, CliError> {
    let bad = |msg: String| CliError::Data(format!("checkpoint: {msg}"));
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".to_string()))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| bad(format!("malformed header: {e}")))?;
    let blob = &bytes[newline + 1..];

    let mut entries: BTreeMap<String, Param> = BTreeMap::new();
    for rec in header.params {
        let count: usize = rec.shape.iter().product();
        let end = rec
            .offset
            .checked_add(count * 8)
            .filter(|&end| end <= blob.len())
            .ok_or_else(|| bad(format!("parameter {} overruns the blob", rec.name)))?;
        let data = blob[rec.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if entries
            .insert(rec.name.clone(), Param { shape: rec.shape, data })
            .is_some()
        {
            return Err(bad(format!("duplicate parameter {}", rec.name)));
        }
    }

    let config = header.config.into_config();
    let total: usize = entries.values().map(|p| p.data.len() * 8).sum();
    if total != blob.len() {
        return Err(bad(format!("blob holds {} bytes, directory expects {total}", blob.len())));
    }
    let params = Params::from_entries(&config, entries).map_err(|e| bad(e.to_string()))?;
    let model = Model::from_parts(config, params).map_err(|e| bad(e.to_string()))?;
    let vocab = Vocab::from_tokens(header.vocab)
        .ok_or_else(|| bad("vocabulary list is not a valid token table".to_string()))?;
    if vocab.len() != model.config.vocab_size {
        return Err(bad(format!(
            "vocabulary has {} tokens but config expects {}",
            vocab.len(),
            model.config.vocab_size
        )));
    }
    Ok(Restored { model, vocab, uses_context: header.uses_context })
}

/// Write a checkpoint file.
pub fn save(path: &Path, model: &Model, vocab: &Vocab, uses_context: bool) -> Result<(), CliError> {
    let bytes = encode(model, vocab, uses_context)?;
    let mut file = std::fs::File::create(path).map_err(|e| io_at(path, e))?;
    file.write_all(&bytes).map_err(|e| io_at(path, e))?;
    Ok(())
}

/// Read a checkpoint file.
pub fn load(path: &Path) -> Result<Restored, CliError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_at(path, e))?;
    decode(&bytes).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Model, Vocab) {
        let vocab = Vocab::build(["pleural effusion is seen", "no acute process"]);
        let config = ModelConfig {
            image_size: 8,
            patch_size: 4,
            enc_depth: 1,
            enc_width: 8,
            enc_heads: 2,
            dec_depth: 1,
            dec_width: 8,
            dec_heads: 2,
            vocab_size: vocab.len(),
            max_text_tokens: 64,
            views: 2,
            classifier: true,
        };
        (Model::new(config, 99).unwrap(), vocab)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (model, vocab) = fixture();
        let bytes = encode(&model, &vocab, true).unwrap();
        let restored = decode(&bytes).unwrap();
        assert_eq!(restored.model, model);
        assert_eq!(restored.vocab.tokens(), vocab.tokens());
        assert!(restored.uses_context);
        assert_eq!(encode(&restored.model, &restored.vocab, true).unwrap(), bytes);
    }

    #[test]
    fn header_is_a_single_json_line() {
        let (model, vocab) = fixture();
        let bytes = encode(&model, &vocab, false).unwrap();
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..newline]).unwrap();
        assert_eq!(header["config"]["vocab_size"], vocab.len());
        assert_eq!(header["uses_context"], false);
        assert!(header["params"].as_array().unwrap().len() > 10);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let (model, vocab) = fixture();
        let bytes = encode(&model, &vocab, true).unwrap();
        // Truncated blob.
        assert!(decode(&bytes[..bytes.len() - 8]).is_err());
        // Header only.
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert!(decode(&bytes[..=newline]).is_err());
        // No header line at all.
        assert!(decode(&bytes[newline + 1..]).is_err());
    }

    #[test]
    fn wrong_shapes_are_rejected() {
        let (model, vocab) = fixture();
        let bytes = encode(&model, &vocab, true).unwrap();
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        let mut header: serde_json::Value = serde_json::from_slice(&bytes[..newline]).unwrap();
        header["params"][0]["shape"] = serde_json::json!([1, 2, 3]);
        let mut rebuilt = serde_json::to_vec(&header).unwrap();
        rebuilt.push(b'\n');
        rebuilt.extend_from_slice(&bytes[newline + 1..]);
        assert!(decode(&rebuilt).is_err());
    }
}
