//! Training-time forward passes, built on the autodiff graph.
//!
//! A [`GraphBuilder`] wraps one [`Graph`] whose leaves borrow the model's
//! parameters, so several forward passes (e.g. the language-model and
//! classifier branches of one sample) share parameter leaves and their
//! gradients accumulate into one place. After `backward`, [`GraphBuilder::
//! grad_by_name`] collects the gradient of every parameter (zeros for
//! parameters the graph never touched) keyed by parameter name.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{decoder_mask, Model, ModelError};
use crate::data::{Image, View, NUM_PATHOLOGIES};
use crate::fmath;
use crate::tensor::{Graph, TensorId};
use crate::text::{TokenId, BOS, EOS, SEP};

/// Flattened row-major patch matrix: one row per patch (patches ordered
/// row-major over the image grid), each row the patch's pixels, themselves
/// row-major. Both forward implementations call this, so their inputs agree
/// bit for bit.
pub fn patch_matrix(image: &Image, patch: usize) -> Vec<f64> {
    let side = image.size / patch;
    let mut out = Vec::with_capacity(side * side * patch * patch);
    for py in 0..side {
        for px in 0..side {
            for dy in 0..patch {
                let row = py * patch + dy;
                let start = row * image.size + px * patch;
                out.extend_from_slice(&image.pixels[start..start + patch]);
            }
        }
    }
    out
}

/// Encoded views inside a graph: the image token matrix `[V*P, enc_width]`
/// and its column-mean pooled summary `[enc_width]`.
#[derive(Debug, Clone, Copy)]
pub struct Encoding {
    pub tokens: TensorId,
    pub pooled: TensorId,
}

/// Decoder forward output: logits `[n_txt, vocab]` over the text rows
/// `[BOS, context, SEP, report]`, and the language-model target for each row
/// (`None` for rows whose prediction is excluded from the loss). Row `i`
/// predicts the input token at text position `i + 1`; the context and SEP
/// predictions are excluded, the report tokens and the closing EOS are kept.
#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub logits: TensorId,
    pub lm_targets: Vec<Option<usize>>,
}

pub struct GraphBuilder<'m> {
    pub graph: Graph<'m>,
    model: &'m Model,
    param_ids: BTreeMap<&'m str, TensorId>,
}

impl<'m> GraphBuilder<'m> {
    pub fn new(model: &'m Model) -> GraphBuilder<'m> {
        GraphBuilder {
            graph: Graph::new(),
            model,
            param_ids: BTreeMap::new(),
        }
    }

    /// Leaf for a named parameter, created on first use and shared after.
    fn p(&mut self, name: &str) -> Result<TensorId, ModelError> {
        if let Some(&id) = self.param_ids.get(name) {
            return Ok(id);
        }
        let (key, param) = self
            .model
            .params
            .lookup(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        let id = self.graph.input_ref(&param.data, &param.shape)?;
        self.param_ids.insert(key, id);
        Ok(id)
    }

    fn affine(&mut self, x: TensorId, w: &str, b: &str) -> Result<TensorId, ModelError> {
        let w = self.p(w)?;
        let b = self.p(b)?;
        let y = self.graph.matmul(x, w)?;
        Ok(self.graph.add(y, b)?)
    }

    fn layer_norm(&mut self, x: TensorId, g: &str, b: &str) -> Result<TensorId, ModelError> {
        let g = self.p(g)?;
        let b = self.p(b)?;
        Ok(self.graph.layer_norm(x, g, b)?)
    }

    /// Pre-norm transformer block: attention and MLP sublayers, each reading
    /// a layer-normed copy of the stream and adding back residually. `mask`
    /// is an optional `[T, T]` additive score mask shared across heads.
    fn block(
        &mut self,
        x: TensorId,
        prefix: &str,
        heads: usize,
        mask: Option<TensorId>,
    ) -> Result<TensorId, ModelError> {
        let width = self.graph.shape(x)[1];
        let head_dim = width / heads;
        let inv_sqrt = 1.0 / fmath::sqrt(head_dim as f64);

        let h = self.layer_norm(x, &format!("{prefix}.ln1.g"), &format!("{prefix}.ln1.b"))?;
        let q = self.affine(h, &format!("{prefix}.attn.wq"), &format!("{prefix}.attn.bq"))?;
        let k = self.affine(h, &format!("{prefix}.attn.wk"), &format!("{prefix}.attn.bk"))?;
        let v = self.affine(h, &format!("{prefix}.attn.wv"), &format!("{prefix}.attn.bv"))?;

        let mut head_outs = Vec::with_capacity(heads);
        for head in 0..heads {
            let start = head * head_dim;
            let qh = self.graph.slice_cols(q, start, head_dim)?;
            let kh = self.graph.slice_cols(k, start, head_dim)?;
            let vh = self.graph.slice_cols(v, start, head_dim)?;
            let kt = self.graph.transpose(kh)?;
            let mut scores = self.graph.matmul(qh, kt)?;
            scores = self.graph.scale(scores, inv_sqrt)?;
            if let Some(m) = mask {
                scores = self.graph.add(scores, m)?;
            }
            let attn = self.graph.softmax(scores, 1)?;
            head_outs.push(self.graph.matmul(attn, vh)?);
        }
        let merged = self.graph.concat_cols(&head_outs)?;
        let attn_out = self.affine(
            merged,
            &format!("{prefix}.attn.wo"),
            &format!("{prefix}.attn.bo"),
        )?;
        let x = self.graph.add(x, attn_out)?;

        let h2 = self.layer_norm(x, &format!("{prefix}.ln2.g"), &format!("{prefix}.ln2.b"))?;
        let up = self.affine(h2, &format!("{prefix}.mlp.w1"), &format!("{prefix}.mlp.b1"))?;
        let act = self.graph.gelu(up)?;
        let down = self.affine(act, &format!("{prefix}.mlp.w2"), &format!("{prefix}.mlp.b2"))?;
        Ok(self.graph.add(x, down)?)
    }

    /// One view through the shared encoder: patchify, project, add positions,
    /// run the bidirectional blocks, final layer norm. `[P, enc_width]`.
    fn encode_one(&mut self, image: &Image) -> Result<TensorId, ModelError> {
        let cfg = &self.model.config;
        if image.size != cfg.image_size {
            return Err(ModelError::ImageSizeMismatch {
                expected: cfg.image_size,
                got: image.size,
            });
        }
        let patches = patch_matrix(image, cfg.patch_size);
        let patches = self
            .graph
            .input(patches, &[cfg.patches_per_view(), cfg.patch_dim()])?;
        let mut x = self.affine(patches, "enc.patch.w", "enc.patch.b")?;
        let pos = self.p("enc.pos")?;
        x = self.graph.add(x, pos)?;
        for i in 0..cfg.enc_depth {
            x = self.block(x, &format!("enc.blk{i:02}"), cfg.enc_heads, None)?;
        }
        self.layer_norm(x, "enc.ln.g", "enc.ln.b")
    }

    /// Encode all views and fuse them. Each view passes through the shared
    /// encoder; with two views a per-slot temporal embedding is added to
    /// every token after encoding; the sequences are concatenated and
    /// mean-pooled for the classifier.
    pub fn encode_views(&mut self, views: &[View]) -> Result<Encoding, ModelError> {
        let cfg = &self.model.config;
        if views.len() != cfg.views {
            return Err(ModelError::WrongViewCount {
                expected: cfg.views,
                got: views.len(),
            });
        }
        let mut encoded = Vec::with_capacity(views.len());
        for (slot, view) in views.iter().enumerate() {
            let mut x = self.encode_one(&view.image)?;
            if cfg.views == 2 {
                let table = self.p("enc.temporal")?;
                let row = self.graph.slice_rows(table, slot, 1)?;
                let row = self.graph.reshape(row, &[cfg.enc_width])?;
                x = self.graph.add(x, row)?;
            }
            encoded.push(x);
        }
        let tokens = if encoded.len() == 1 {
            encoded[0]
        } else {
            self.graph.concat_rows(&encoded)?
        };
        let pooled = self.graph.mean_rows(tokens)?;
        Ok(Encoding { tokens, pooled })
    }

    /// Teacher-forced decoder pass over `[image; BOS; context; SEP; report]`.
    pub fn decode(
        &mut self,
        encoding: &Encoding,
        context: &[TokenId],
        report: &[TokenId],
    ) -> Result<DecodeOutput, ModelError> {
        let cfg = &self.model.config;
        let (m, n) = (context.len(), report.len());
        if m + n > cfg.max_text_tokens {
            return Err(ModelError::TextTooLong {
                tokens: m + n,
                max: cfg.max_text_tokens,
            });
        }
        if let Some(&id) = context.iter().chain(report).find(|&&t| (t as usize) >= cfg.vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                id,
                vocab: cfg.vocab_size,
            });
        }

        let img = self.affine(encoding.tokens, "dec.img_proj.w", "dec.img_proj.b")?;
        let n_img = self.graph.shape(img)[0];

        let mut ids: Vec<usize> = Vec::with_capacity(m + n + 2);
        ids.push(BOS as usize);
        ids.extend(context.iter().map(|&t| t as usize));
        ids.push(SEP as usize);
        ids.extend(report.iter().map(|&t| t as usize));
        let n_txt = ids.len();

        let table = self.p("dec.tok")?;
        let tok = self.graph.embedding_lookup(table, &ids)?;
        let pos_table = self.p("dec.pos")?;
        let pos = self.graph.slice_rows(pos_table, 0, n_txt)?;
        let text = self.graph.add(tok, pos)?;

        let mut x = self.graph.concat_rows(&[img, text])?;
        let total = n_img + n_txt;
        let mask = self.graph.input(decoder_mask(n_img, n_txt), &[total, total])?;
        for i in 0..cfg.dec_depth {
            x = self.block(x, &format!("dec.blk{i:02}"), cfg.dec_heads, Some(mask))?;
        }
        x = self.layer_norm(x, "dec.ln.g", "dec.ln.b")?;
        let text_rows = self.graph.slice_rows(x, n_img, n_txt)?;
        let logits = self.affine(text_rows, "dec.lm.w", "dec.lm.b")?;

        let mut lm_targets = alloc::vec![None; n_txt];
        for (j, &r) in report.iter().enumerate() {
            lm_targets[m + 1 + j] = Some(r as usize);
        }
        lm_targets[m + 1 + n] = Some(EOS as usize);

        Ok(DecodeOutput { logits, lm_targets })
    }

    /// Label logits `[14, 4]`: the pooled image summary through fourteen
    /// independent affine heads.
    pub fn classify(&mut self, encoding: &Encoding) -> Result<TensorId, ModelError> {
        let cfg = &self.model.config;
        if !cfg.classifier {
            return Err(ModelError::ClassifierDisabled);
        }
        let pooled = self.graph.reshape(encoding.pooled, &[1, cfg.enc_width])?;
        let mut rows = Vec::with_capacity(NUM_PATHOLOGIES);
        for d in 0..NUM_PATHOLOGIES {
            let row = self.affine(pooled, &format!("cls.h{d:02}.w"), &format!("cls.h{d:02}.b"))?;
            rows.push(row);
        }
        Ok(self.graph.concat_rows(&rows)?)
    }

    /// Gradient of every model parameter after `backward`, keyed by name.
    /// Parameters the graph never touched (or that received no gradient)
    /// come back as zeros, so the map always covers the full parameter set.
    pub fn grad_by_name(&self) -> BTreeMap<String, Vec<f64>> {
        let mut out = BTreeMap::new();
        for (name, param) in self.model.params.iter() {
            let grad = self
                .param_ids
                .get(name.as_str())
                .and_then(|&id| self.graph.grad(id))
                .map(|g| g.to_vec())
                .unwrap_or_else(|| alloc::vec![0.0; param.data.len()]);
            out.insert(name.clone(), grad);
        }
        out
    }
}
