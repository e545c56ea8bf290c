//! Incremental decoding with per-layer key/value caches.
//!
//! This path re-implements the forward pass with direct kernel calls instead
//! of graph nodes: the encoder runs once per view, the image rows are pushed
//! through the decoder layers as a prefix whose keys and values are cached,
//! and each text token then costs one row of work per layer.
//!
//! The arithmetic here is arranged to be *bit-identical* to the training
//! graph. Both paths call the same kernels with the same operand layouts and
//! summation orders; the only difference — the graph softmax sees masked
//! columns where this path sees none — is harmless because masked scores
//! (`score + MASK_OFF`) underflow to exactly `+0.0` under `exp`, contribute
//! nothing to the row sums, and are skipped by the zero-skipping matmul.
//! A test below asserts exact equality of the two paths' logits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::forward::patch_matrix;
use super::{Model, ModelError, Param};
use crate::data::View;
use crate::fmath;
use crate::tensor::kernels;
use crate::tensor::LAYER_NORM_EPS;
use crate::text::{TokenId, TokenSeq, BOS, EOS, SEP};

/// Decoding strategy for [`generate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Highest-probability token at each step (ties to the lowest id).
    Greedy,
    /// Beam search with the given width over summed token log-probabilities.
    /// No length normalization; ties prefer lower token ids, then earlier
    /// beams. `Beam(1)` reproduces greedy decoding.
    Beam(usize),
}

// ── row-level kernels (each mirrors one graph op exactly) ───────────────

/// `x · w + b` over `rows` rows; bias broadcast per row.
fn affine_rows(x: &[f64], rows: usize, w: &Param, b: &Param) -> Vec<f64> {
    let (k, n) = (w.shape[0], w.shape[1]);
    debug_assert_eq!(x.len(), rows * k);
    let mut y = kernels::matmul(x, &w.data, rows, k, n);
    for (i, v) in y.iter_mut().enumerate() {
        *v += b.data[i % n];
    }
    y
}

fn ln_rows(x: &[f64], rows: usize, g: &Param, b: &Param) -> Vec<f64> {
    let w = g.data.len();
    debug_assert_eq!(x.len(), rows * w);
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        kernels::layer_norm_lane(
            &x[r * w..(r + 1) * w],
            &g.data,
            &b.data,
            LAYER_NORM_EPS,
            &mut out[r * w..(r + 1) * w],
        );
    }
    out
}

fn slice_cols(x: &[f64], rows: usize, cols: usize, start: usize, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * len);
    for r in 0..rows {
        out.extend_from_slice(&x[r * cols + start..r * cols + start + len]);
    }
    out
}

fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}

fn add_assign(x: &mut [f64], y: &[f64]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

/// Attention weights for `q_rows` query rows against a `len`-row key/value
/// cache, one head: scores, scale, row softmax, then the weighted value sum.
/// `kh`/`vh` are `[len, head_dim]`, `qh` is `[q_rows, head_dim]`.
fn attend(qh: &[f64], kh: &[f64], vh: &[f64], q_rows: usize, len: usize, hd: usize) -> Vec<f64> {
    let inv_sqrt = 1.0 / fmath::sqrt(hd as f64);
    let kt = transpose(kh, len, hd);
    let mut scores = kernels::matmul(qh, &kt, q_rows, hd, len);
    for s in scores.iter_mut() {
        *s *= inv_sqrt;
    }
    let mut weights = vec![0.0; q_rows * len];
    for r in 0..q_rows {
        kernels::softmax_lane(&scores[r * len..(r + 1) * len], &mut weights[r * len..(r + 1) * len]);
    }
    kernels::matmul(&weights, vh, q_rows, len, hd)
}

/// One pre-norm block over `t` rows with full self-attention (every row sees
/// every row). Returns the updated stream plus the key and value projections
/// so the decoder prefix can cache them; the encoder ignores those.
fn attn_block(model: &Model, prefix: &str, heads: usize, x: Vec<f64>, t: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = &model.params;
    let g1 = p.get(&format!("{prefix}.ln1.g"));
    let b1 = p.get(&format!("{prefix}.ln1.b"));
    let w = g1.data.len();
    let hd = w / heads;

    let h = ln_rows(&x, t, g1, b1);
    let q = affine_rows(&h, t, p.get(&format!("{prefix}.attn.wq")), p.get(&format!("{prefix}.attn.bq")));
    let k = affine_rows(&h, t, p.get(&format!("{prefix}.attn.wk")), p.get(&format!("{prefix}.attn.bk")));
    let v = affine_rows(&h, t, p.get(&format!("{prefix}.attn.wv")), p.get(&format!("{prefix}.attn.bv")));

    let mut merged = vec![0.0; t * w];
    for head in 0..heads {
        let start = head * hd;
        let qh = slice_cols(&q, t, w, start, hd);
        let kh = slice_cols(&k, t, w, start, hd);
        let vh = slice_cols(&v, t, w, start, hd);
        let oh = attend(&qh, &kh, &vh, t, t, hd);
        for r in 0..t {
            merged[r * w + start..r * w + start + hd].copy_from_slice(&oh[r * hd..(r + 1) * hd]);
        }
    }
    let o = affine_rows(&merged, t, p.get(&format!("{prefix}.attn.wo")), p.get(&format!("{prefix}.attn.bo")));
    let mut x = x;
    add_assign(&mut x, &o);

    let h2 = ln_rows(&x, t, p.get(&format!("{prefix}.ln2.g")), p.get(&format!("{prefix}.ln2.b")));
    let up = affine_rows(&h2, t, p.get(&format!("{prefix}.mlp.w1")), p.get(&format!("{prefix}.mlp.b1")));
    let act: Vec<f64> = up.iter().map(|&u| kernels::gelu(u)).collect();
    let down = affine_rows(&act, t, p.get(&format!("{prefix}.mlp.w2")), p.get(&format!("{prefix}.mlp.b2")));
    add_assign(&mut x, &down);
    (x, k, v)
}

/// Encode all views without a graph: `[views * P, enc_width]` row-major.
pub(crate) fn encode_views_infer(model: &Model, views: &[View]) -> Result<Vec<f64>, ModelError> {
    let cfg = &model.config;
    if views.len() != cfg.views {
        return Err(ModelError::WrongViewCount {
            expected: cfg.views,
            got: views.len(),
        });
    }
    let p = &model.params;
    let (pp, ew) = (cfg.patches_per_view(), cfg.enc_width);
    let mut all = Vec::with_capacity(views.len() * pp * ew);
    for (slot, view) in views.iter().enumerate() {
        if view.image.size != cfg.image_size {
            return Err(ModelError::ImageSizeMismatch {
                expected: cfg.image_size,
                got: view.image.size,
            });
        }
        let pm = patch_matrix(&view.image, cfg.patch_size);
        let mut x = affine_rows(&pm, pp, p.get("enc.patch.w"), p.get("enc.patch.b"));
        add_assign(&mut x, &p.get("enc.pos").data);
        for l in 0..cfg.enc_depth {
            x = attn_block(model, &format!("enc.blk{l:02}"), cfg.enc_heads, x, pp).0;
        }
        x = ln_rows(&x, pp, p.get("enc.ln.g"), p.get("enc.ln.b"));
        if cfg.views == 2 {
            let row = &p.get("enc.temporal").data[slot * ew..(slot + 1) * ew];
            for (i, v) in x.iter_mut().enumerate() {
                *v += row[i % ew];
            }
        }
        all.extend_from_slice(&x);
    }
    Ok(all)
}

/// Decoder with cached keys/values: the image prefix is processed once, then
/// each text token costs one row per layer. Cloning the state forks the
/// sequence (used by beam search).
#[derive(Clone)]
pub struct DecoderState<'m> {
    model: &'m Model,
    /// Per layer, `[rows, dec_width]` key and value projections so far.
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    rows: usize,
    text_pos: usize,
}

impl<'m> DecoderState<'m> {
    /// Run the projected image rows `[n_img, dec_width]` through every layer,
    /// caching their keys and values.
    fn prime(model: &'m Model, img: Vec<f64>, n_img: usize) -> DecoderState<'m> {
        let cfg = &model.config;
        let mut state = DecoderState {
            model,
            k: vec![Vec::new(); cfg.dec_depth],
            v: vec![Vec::new(); cfg.dec_depth],
            rows: n_img,
            text_pos: 0,
        };
        let mut x = img;
        for l in 0..cfg.dec_depth {
            let (nx, k, v) = attn_block(model, &format!("dec.blk{l:02}"), cfg.dec_heads, x, n_img);
            state.k[l] = k;
            state.v[l] = v;
            x = nx;
        }
        state
    }

    /// Append one text token and return its next-token logits `[vocab]`.
    pub fn push_token(&mut self, token: TokenId) -> Vec<f64> {
        let cfg = &self.model.config;
        let p = &self.model.params;
        let w = cfg.dec_width;
        let heads = cfg.dec_heads;
        let hd = w / heads;
        debug_assert!(self.text_pos < cfg.max_text_rows());
        debug_assert!((token as usize) < cfg.vocab_size);

        let tok = &p.get("dec.tok").data[token as usize * w..(token as usize + 1) * w];
        let pos = &p.get("dec.pos").data[self.text_pos * w..(self.text_pos + 1) * w];
        let mut x: Vec<f64> = tok.iter().zip(pos).map(|(a, b)| a + b).collect();

        let len = self.rows + 1;
        for l in 0..cfg.dec_depth {
            let prefix = format!("dec.blk{l:02}");
            let h = ln_rows(&x, 1, p.get(&format!("{prefix}.ln1.g")), p.get(&format!("{prefix}.ln1.b")));
            let q = affine_rows(&h, 1, p.get(&format!("{prefix}.attn.wq")), p.get(&format!("{prefix}.attn.bq")));
            let k = affine_rows(&h, 1, p.get(&format!("{prefix}.attn.wk")), p.get(&format!("{prefix}.attn.bk")));
            let v = affine_rows(&h, 1, p.get(&format!("{prefix}.attn.wv")), p.get(&format!("{prefix}.attn.bv")));
            self.k[l].extend_from_slice(&k);
            self.v[l].extend_from_slice(&v);

            let mut merged = vec![0.0; w];
            for head in 0..heads {
                let start = head * hd;
                let qh = slice_cols(&q, 1, w, start, hd);
                let kh = slice_cols(&self.k[l], len, w, start, hd);
                let vh = slice_cols(&self.v[l], len, w, start, hd);
                let oh = attend(&qh, &kh, &vh, 1, len, hd);
                merged[start..start + hd].copy_from_slice(&oh);
            }
            let o = affine_rows(&merged, 1, p.get(&format!("{prefix}.attn.wo")), p.get(&format!("{prefix}.attn.bo")));
            add_assign(&mut x, &o);

            let h2 = ln_rows(&x, 1, p.get(&format!("{prefix}.ln2.g")), p.get(&format!("{prefix}.ln2.b")));
            let up = affine_rows(&h2, 1, p.get(&format!("{prefix}.mlp.w1")), p.get(&format!("{prefix}.mlp.b1")));
            let act: Vec<f64> = up.iter().map(|&u| kernels::gelu(u)).collect();
            let down = affine_rows(&act, 1, p.get(&format!("{prefix}.mlp.w2")), p.get(&format!("{prefix}.mlp.b2")));
            add_assign(&mut x, &down);
        }
        self.rows = len;
        self.text_pos += 1;

        let y = ln_rows(&x, 1, p.get("dec.ln.g"), p.get("dec.ln.b"));
        affine_rows(&y, 1, p.get("dec.lm.w"), p.get("dec.lm.b"))
    }
}

/// Encode views, project them into the decoder, and feed
/// `[BOS, context, SEP]`. Returns the primed state and the logits that
/// predict the first report token.
fn primed_state<'m>(
    model: &'m Model,
    views: &[View],
    context: &[TokenId],
) -> Result<(DecoderState<'m>, Vec<f64>), ModelError> {
    let cfg = &model.config;
    if context.len() > cfg.max_text_tokens {
        return Err(ModelError::TextTooLong {
            tokens: context.len(),
            max: cfg.max_text_tokens,
        });
    }
    if let Some(&id) = context.iter().find(|&&t| (t as usize) >= cfg.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            id,
            vocab: cfg.vocab_size,
        });
    }
    let enc = encode_views_infer(model, views)?;
    let n_img = cfg.image_tokens();
    let img = affine_rows(
        &enc,
        n_img,
        model.params.get("dec.img_proj.w"),
        model.params.get("dec.img_proj.b"),
    );
    let mut state = DecoderState::prime(model, img, n_img);
    state.push_token(BOS);
    for &c in context {
        state.push_token(c);
    }
    let logits = state.push_token(SEP);
    Ok((state, logits))
}

/// Teacher-forced logits for every text row `[BOS, context, SEP, report]`,
/// one `[vocab]` vector per row. Row `i`'s logits predict the token at text
/// position `i + 1`; the last row predicts EOS. Bit-identical to the
/// training graph's decoder logits.
pub fn forced_logits(
    model: &Model,
    views: &[View],
    context: &[TokenId],
    report: &[TokenId],
) -> Result<Vec<Vec<f64>>, ModelError> {
    let cfg = &model.config;
    if context.len() + report.len() > cfg.max_text_tokens {
        return Err(ModelError::TextTooLong {
            tokens: context.len() + report.len(),
            max: cfg.max_text_tokens,
        });
    }
    if let Some(&id) = report.iter().find(|&&t| (t as usize) >= cfg.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            id,
            vocab: cfg.vocab_size,
        });
    }
    if let Some(&id) = context.iter().find(|&&t| (t as usize) >= cfg.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            id,
            vocab: cfg.vocab_size,
        });
    }
    let enc = encode_views_infer(model, views)?;
    let n_img = cfg.image_tokens();
    let img = affine_rows(
        &enc,
        n_img,
        model.params.get("dec.img_proj.w"),
        model.params.get("dec.img_proj.b"),
    );
    let mut st = DecoderState::prime(model, img, n_img);
    let mut all = Vec::with_capacity(context.len() + report.len() + 2);
    all.push(st.push_token(BOS));
    for &c in context {
        all.push(st.push_token(c));
    }
    all.push(st.push_token(SEP));
    for &r in report {
        all.push(st.push_token(r));
    }
    Ok(all)
}

/// Autoregressive report generation from the image views and a context
/// prompt. Decoding stops at EOS or when context + report reaches the text
/// budget. The returned sequence holds report tokens only (no BOS/SEP/EOS).
pub fn generate(
    model: &Model,
    views: &[View],
    context: &[TokenId],
    mode: DecodeMode,
) -> Result<TokenSeq, ModelError> {
    let cap = model.config.max_text_tokens.saturating_sub(context.len());
    match mode {
        DecodeMode::Greedy => {
            let (mut state, mut logits) = primed_state(model, views, context)?;
            let mut out = TokenSeq::new();
            if cap == 0 {
                return Ok(out);
            }
            loop {
                let t = kernels::argmax(&logits) as TokenId;
                if t == EOS {
                    break;
                }
                out.push(t);
                if out.len() == cap {
                    break;
                }
                logits = state.push_token(t);
            }
            Ok(out)
        }
        DecodeMode::Beam(width) => beam_search(model, views, context, width, cap),
    }
}

struct Beam<'m> {
    state: DecoderState<'m>,
    logits: Vec<f64>,
    tokens: TokenSeq,
    score: f64,
    done: bool,
}

/// Candidate marker for carrying a finished beam forward unchanged.
const CARRY: TokenId = TokenId::MAX;

fn beam_search(
    model: &Model,
    views: &[View],
    context: &[TokenId],
    width: usize,
    cap: usize,
) -> Result<TokenSeq, ModelError> {
    if width == 0 {
        return Err(ModelError::BadConfig {
            reason: "beam width must be at least 1".into(),
        });
    }
    let (state, logits) = primed_state(model, views, context)?;
    let mut beams = vec![Beam {
        state,
        logits,
        tokens: TokenSeq::new(),
        score: 0.0,
        done: cap == 0,
    }];

    while beams.iter().any(|b| !b.done) {
        // (score, token, source beam); sorted best score first, ties to the
        // lower token id, then the earlier beam, so expansion is fully
        // deterministic.
        let mut cands: Vec<(f64, TokenId, usize)> = Vec::new();
        for (bi, b) in beams.iter().enumerate() {
            if b.done {
                cands.push((b.score, CARRY, bi));
                continue;
            }
            let lse = kernels::log_sum_exp(&b.logits);
            for (t, &lg) in b.logits.iter().enumerate() {
                cands.push((b.score + (lg - lse), t as TokenId, bi));
            }
        }
        cands.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut next: Vec<Beam> = Vec::with_capacity(width);
        for &(score, tok, bi) in &cands {
            if next.len() == width {
                break;
            }
            let src = &beams[bi];
            if tok == CARRY || tok == EOS {
                // finished: carried forward or just closed by EOS
                next.push(Beam {
                    state: src.state.clone(),
                    logits: Vec::new(),
                    tokens: src.tokens.clone(),
                    score,
                    done: true,
                });
            } else {
                let mut tokens = src.tokens.clone();
                tokens.push(tok);
                if tokens.len() >= cap {
                    next.push(Beam {
                        state: src.state.clone(),
                        logits: Vec::new(),
                        tokens,
                        score,
                        done: true,
                    });
                } else {
                    let mut state = src.state.clone();
                    let logits = state.push_token(tok);
                    next.push(Beam {
                        state,
                        logits,
                        tokens,
                        score,
                        done: false,
                    });
                }
            }
        }
        beams = next;
    }

    let mut best = 0;
    for i in 1..beams.len() {
        if beams[i].score > beams[best].score {
            best = i;
        }
    }
    Ok(beams.swap_remove(best).tokens)
}
