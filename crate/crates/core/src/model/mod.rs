//! Image-to-text transformer with an optional per-pathology classifier.
//!
//! The architecture is a patch encoder feeding a text decoder through an
//! attention prefix: every image is cut into non-overlapping patches,
//! linearly projected, and run through a bidirectional transformer encoder;
//! the resulting image tokens are projected into the decoder width and
//! prepended to the token sequence `[BOS, context, SEP, report]`, where text
//! positions attend causally to each other and freely to every image token.
//! With two views, a learned temporal embedding per view slot is added after
//! encoding so the decoder can tell the views apart; a mean-pooled summary of
//! the image tokens drives fourteen independent four-class label heads.
//!
//! Two forward implementations share the same kernels and therefore produce
//! bit-identical logits:
//!
//! * [`forward::GraphBuilder`] builds the autodiff graph used in training;
//! * [`infer`] runs the incremental decoder with per-layer key/value caches
//!   used for generation.

pub mod forward;
pub mod infer;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{NUM_CLASSES, NUM_PATHOLOGIES};
use crate::rng::Rng;
use crate::tensor::TensorError;
use crate::text::RESERVED;

pub use forward::{DecodeOutput, Encoding, GraphBuilder};
pub use infer::{generate, DecodeMode};

/// Additive attention-mask value for disallowed positions. Large enough that
/// `exp(score + MASK_OFF - row_max)` underflows to exactly `+0.0`, which keeps
/// the masked training softmax bit-identical to the cached inference softmax
/// that never sees the masked positions.
pub const MASK_OFF: f64 = -1e30;

/// Standard deviation of the normal weight initialization.
pub const INIT_STD: f64 = 0.02;

/// Extra gain on the two image-pathway projections (patch embedding and the
/// image-prefix projection). Image features otherwise pass through two
/// INIT_STD-scale maps before any text row attends to them, which leaves the
/// pathway so attenuated that short training runs learn text statistics
/// alone; the gain keeps image gradients alive from the first step.
pub const IMG_INIT_GAIN: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    BadConfig { reason: String },
    WrongViewCount { expected: usize, got: usize },
    ImageSizeMismatch { expected: usize, got: usize },
    /// Combined context + report token count exceeds the text budget.
    TextTooLong { tokens: usize, max: usize },
    TokenOutOfRange { id: u32, vocab: usize },
    ClassifierDisabled,
    Tensor(TensorError),
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        ModelError::Tensor(e)
    }
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::BadConfig { reason } => write!(f, "bad model config: {reason}"),
            ModelError::WrongViewCount { expected, got } => {
                write!(f, "expected {expected} view(s), got {got}")
            }
            ModelError::ImageSizeMismatch { expected, got } => {
                write!(f, "expected {expected}x{expected} image, got {got}x{got}")
            }
            ModelError::TextTooLong { tokens, max } => {
                write!(f, "text length {tokens} exceeds budget {max}")
            }
            ModelError::TokenOutOfRange { id, vocab } => {
                write!(f, "token id {id} outside vocabulary of size {vocab}")
            }
            ModelError::ClassifierDisabled => write!(f, "classifier head is disabled"),
            ModelError::Tensor(e) => write!(f, "tensor error: {e}"),
        }
    }
}

/// Architecture hyperparameters. `max_text_tokens` bounds context + report
/// combined; the decoder position table covers that many tokens plus the BOS
/// and SEP rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// Square image side length (height = width).
    pub image_size: usize,
    /// Square patch side length; must divide `image_size`.
    pub patch_size: usize,
    pub enc_depth: usize,
    pub enc_width: usize,
    pub enc_heads: usize,
    pub dec_depth: usize,
    pub dec_width: usize,
    pub dec_heads: usize,
    pub vocab_size: usize,
    /// Combined context + report token budget (192 by default).
    pub max_text_tokens: usize,
    /// Views per sample: 1 or 2.
    pub views: usize,
    /// Whether the fourteen label heads exist.
    pub classifier: bool,
}

impl ModelConfig {
    /// Desk-scale default: 32x32 images in 8-pixel patches, two 64-wide
    /// 4-head layers on each side, two views, classifier on.
    pub fn desk(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            image_size: 32,
            patch_size: 8,
            enc_depth: 2,
            enc_width: 64,
            enc_heads: 4,
            dec_depth: 2,
            dec_width: 64,
            dec_heads: 4,
            vocab_size,
            max_text_tokens: crate::data::MAX_TEXT_TOKENS,
            views: 2,
            classifier: true,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: String| Err(ModelError::BadConfig { reason });
        if self.patch_size == 0 || self.image_size == 0 {
            return bad("image and patch sizes must be positive".into());
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return bad(format!(
                "image size {} not divisible by patch size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.enc_depth == 0 || self.dec_depth == 0 {
            return bad("encoder and decoder need at least one layer".into());
        }
        if self.enc_heads == 0 || !self.enc_width.is_multiple_of(self.enc_heads) {
            return bad(format!(
                "encoder width {} not divisible by {} heads",
                self.enc_width, self.enc_heads
            ));
        }
        if self.dec_heads == 0 || !self.dec_width.is_multiple_of(self.dec_heads) {
            return bad(format!(
                "decoder width {} not divisible by {} heads",
                self.dec_width, self.dec_heads
            ));
        }
        if self.views != 1 && self.views != 2 {
            return bad(format!("views must be 1 or 2, got {}", self.views));
        }
        if self.vocab_size <= RESERVED as usize {
            return bad(format!(
                "vocabulary of {} does not cover the {} reserved tokens",
                self.vocab_size, RESERVED
            ));
        }
        if self.max_text_tokens < crate::data::MAX_CONTEXT_TOKENS + 1 {
            return bad(format!(
                "text budget {} leaves no room for a report after a {}-token context",
                self.max_text_tokens,
                crate::data::MAX_CONTEXT_TOKENS
            ));
        }
        Ok(())
    }

    /// Patch tokens per view: `(image_size / patch_size)^2`.
    pub fn patches_per_view(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    /// Image tokens in the decoder prefix: `views * patches_per_view`.
    pub fn image_tokens(&self) -> usize {
        self.views * self.patches_per_view()
    }

    /// Flattened patch length: `patch_size^2` grayscale intensities.
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    /// Decoder text rows: the budget plus the BOS and SEP rows.
    pub fn max_text_rows(&self) -> usize {
        self.max_text_tokens + 2
    }
}

/// One named tensor of trainable values.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

enum ParamKind {
    /// Normal(0, INIT_STD): projections and embeddings.
    Weight,
    /// Zeros: biases and layer-norm offsets.
    Zero,
    /// Ones: layer-norm gains.
    One,
}

/// Enumerates every parameter of a config in a fixed construction order.
/// Initialization draws random values in this order, so the parameter set of
/// a given (config, seed) pair is reproducible.
fn for_each_spec(config: &ModelConfig, mut f: impl FnMut(String, Vec<usize>, ParamKind)) {
    use ParamKind::{One, Weight, Zero};
    let (ew, dw) = (config.enc_width, config.dec_width);
    f("enc.patch.w".into(), vec![config.patch_dim(), ew], Weight);
    f("enc.patch.b".into(), vec![ew], Zero);
    f("enc.pos".into(), vec![config.patches_per_view(), ew], Weight);
    for i in 0..config.enc_depth {
        block_specs(&format!("enc.blk{i:02}"), ew, &mut f);
    }
    f("enc.ln.g".into(), vec![ew], One);
    f("enc.ln.b".into(), vec![ew], Zero);
    if config.views == 2 {
        f("enc.temporal".into(), vec![2, ew], Weight);
    }
    f("dec.img_proj.w".into(), vec![ew, dw], Weight);
    f("dec.img_proj.b".into(), vec![dw], Zero);
    f("dec.tok".into(), vec![config.vocab_size, dw], Weight);
    f("dec.pos".into(), vec![config.max_text_rows(), dw], Weight);
    for i in 0..config.dec_depth {
        block_specs(&format!("dec.blk{i:02}"), dw, &mut f);
    }
    f("dec.ln.g".into(), vec![dw], One);
    f("dec.ln.b".into(), vec![dw], Zero);
    f("dec.lm.w".into(), vec![dw, config.vocab_size], Weight);
    f("dec.lm.b".into(), vec![config.vocab_size], Zero);
    if config.classifier {
        for d in 0..NUM_PATHOLOGIES {
            f(format!("cls.h{d:02}.w"), vec![ew, NUM_CLASSES], Weight);
            f(format!("cls.h{d:02}.b"), vec![NUM_CLASSES], Zero);
        }
    }
}

fn block_specs(prefix: &str, w: usize, f: &mut impl FnMut(String, Vec<usize>, ParamKind)) {
    use ParamKind::{One, Weight, Zero};
    f(format!("{prefix}.ln1.g"), vec![w], One);
    f(format!("{prefix}.ln1.b"), vec![w], Zero);
    for n in ["wq", "wk", "wv", "wo"] {
        f(format!("{prefix}.attn.{n}"), vec![w, w], Weight);
    }
    for n in ["bq", "bk", "bv", "bo"] {
        f(format!("{prefix}.attn.{n}"), vec![w], Zero);
    }
    f(format!("{prefix}.ln2.g"), vec![w], One);
    f(format!("{prefix}.ln2.b"), vec![w], Zero);
    f(format!("{prefix}.mlp.w1"), vec![w, 4 * w], Weight);
    f(format!("{prefix}.mlp.b1"), vec![4 * w], Zero);
    f(format!("{prefix}.mlp.w2"), vec![4 * w, w], Weight);
    f(format!("{prefix}.mlp.b2"), vec![w], Zero);
}

/// Named parameter store. Iteration order is always name order (sorted),
/// which fixes the flat layout used by the optimizer and checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    map: BTreeMap<String, Param>,
}

impl Params {
    /// Fresh parameters for `config`, drawn from `rng` in construction order.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Params {
        let mut map = BTreeMap::new();
        for_each_spec(config, |name, shape, kind| {
            let n: usize = shape.iter().product();
            let data = match kind {
                ParamKind::Weight => (0..n).map(|_| rng.next_normal() * INIT_STD).collect(),
                ParamKind::Zero => vec![0.0; n],
                ParamKind::One => vec![1.0; n],
            };
            map.insert(name, Param { shape, data });
        });
        Params { map }
    }

    /// Name → shape for every parameter `config` requires, in name order.
    pub fn shape_template(config: &ModelConfig) -> BTreeMap<String, Vec<usize>> {
        let mut out = BTreeMap::new();
        for_each_spec(config, |name, shape, _| {
            out.insert(name, shape);
        });
        out
    }

    /// Rebuild from named entries (e.g. a checkpoint), verifying the set of
    /// names and every shape against what `config` requires.
    pub fn from_entries(
        config: &ModelConfig,
        entries: BTreeMap<String, Param>,
    ) -> Result<Params, ModelError> {
        let template = Params::shape_template(config);
        for name in entries.keys() {
            if !template.contains_key(name) {
                return Err(ModelError::BadConfig {
                    reason: format!("unexpected parameter {name}"),
                });
            }
        }
        for (name, shape) in &template {
            let Some(p) = entries.get(name) else {
                return Err(ModelError::BadConfig {
                    reason: format!("missing parameter {name}"),
                });
            };
            if &p.shape != shape || p.data.len() != shape.iter().product::<usize>() {
                return Err(ModelError::BadConfig {
                    reason: format!("parameter {name} has the wrong shape"),
                });
            }
        }
        Ok(Params { map: entries })
    }

    pub fn get(&self, name: &str) -> &Param {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Param {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// The stored key and value, with the key borrowed at the store's
    /// lifetime (used to key graph leaves without cloning names).
    pub fn lookup(&self, name: &str) -> Option<(&str, &Param)> {
        self.map.get_key_value(name).map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn value_count(&self) -> usize {
        self.map.values().map(|p| p.data.len()).sum()
    }
}

/// A config plus its parameters: everything a forward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

impl Model {
    /// Validate `config` and initialize fresh parameters from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model, ModelError> {
        config.validate()?;
        let mut rng = Rng::for_stream(seed, PARAM_STREAM);
        let params = Params::init(&config, &mut rng);
        Ok(Model { config, params })
    }

    /// Wrap an existing parameter set (e.g. loaded from a checkpoint).
    pub fn from_parts(config: ModelConfig, params: Params) -> Result<Model, ModelError> {
        config.validate()?;
        let entries = params.map;
        let params = Params::from_entries(&config, entries)?;
        Ok(Model { config, params })
    }
}

/// RNG stream tag for parameter initialization.
pub const PARAM_STREAM: u64 = 0x7061_7261_6d73; // "params"

/// Additive attention mask for a decoder sequence of `n_img` image rows
/// followed by `n_txt` text rows, flattened `[T, T]` row-major with
/// `T = n_img + n_txt`. Entry `(i, j)` is `0.0` where row `i` may attend
/// column `j` and [`MASK_OFF`] elsewhere: image rows attend bidirectionally
/// among themselves only; text rows attend every image row and text rows at
/// or before their own position.
pub fn decoder_mask(n_img: usize, n_txt: usize) -> Vec<f64> {
    let t = n_img + n_txt;
    let mut m = vec![MASK_OFF; t * t];
    for i in 0..t {
        for j in 0..t {
            let allowed = if i < n_img { j < n_img } else { j < n_img || j <= i };
            if allowed {
                m[i * t + j] = 0.0;
            }
        }
    }
    m
}
