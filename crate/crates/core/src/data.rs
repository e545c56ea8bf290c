//! Study records, pathology labels, and the rules that turn studies into
//! training samples (section assembly, context assembly, view pairing).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::text::{TokenSeq, Vocab};

/// Number of pathology categories.
pub const NUM_PATHOLOGIES: usize = 14;
/// Number of label classes per pathology.
pub const NUM_CLASSES: usize = 4;

/// Canonical pathology order; every 14-vector in the codebase follows it.
pub const PATHOLOGIES: [&str; NUM_PATHOLOGIES] = [
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
    "No Finding",
];

/// Mention class of one pathology in one report. The discriminant is the
/// classifier's class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Label {
    Positive = 0,
    Negative = 1,
    Uncertain = 2,
    Missing = 3,
}

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [
        Label::Positive,
        Label::Negative,
        Label::Uncertain,
        Label::Missing,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Positive => "Positive",
            Label::Negative => "Negative",
            Label::Uncertain => "Uncertain",
            Label::Missing => "Missing",
        }
    }

    pub fn from_name(s: &str) -> Option<Label> {
        Label::ALL.into_iter().find(|l| l.name() == s)
    }
}

/// One study's labels: one class per pathology, in [`PATHOLOGIES`] order.
pub type LabelVec = [Label; NUM_PATHOLOGIES];

/// Labels for a set of studies (rows follow the study order).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelGrid {
    pub rows: Vec<LabelVec>,
}

impl LabelGrid {
    /// Count of rows where `pathology` is Positive.
    pub fn positive_count(&self, pathology: usize) -> usize {
        self.rows
            .iter()
            .filter(|r| r[pathology] == Label::Positive)
            .count()
    }
}

/// X-ray projection of one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewTag {
    /// Anterior-posterior (frontal).
    Ap,
    /// Posterior-anterior (frontal).
    Pa,
    /// Lateral.
    Lateral,
    /// Left lateral.
    Ll,
}

impl ViewTag {
    pub fn is_frontal(self) -> bool {
        matches!(self, ViewTag::Ap | ViewTag::Pa)
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewTag::Ap => "AP",
            ViewTag::Pa => "PA",
            ViewTag::Lateral => "LATERAL",
            ViewTag::Ll => "LL",
        }
    }

    pub fn from_name(s: &str) -> Option<ViewTag> {
        [ViewTag::Ap, ViewTag::Pa, ViewTag::Lateral, ViewTag::Ll]
            .into_iter()
            .find(|v| v.name() == s)
    }
}

/// Square grayscale image, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub size: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn zeros(size: usize) -> Image {
        Image {
            size,
            pixels: vec![0.0; size * size],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub tag: ViewTag,
    pub image: Image,
}

/// Dataset partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn from_name(s: &str) -> Option<Split> {
        [Split::Train, Split::Validation, Split::Test]
            .into_iter()
            .find(|x| x.name() == s)
    }
}

/// Optional raw text sections of a study. Empty strings mean absent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sections {
    pub impression: String,
    pub findings: String,
    pub indication: String,
    pub history: String,
}

/// One imaging study: a patient visit with one or more views and a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub study_id: String,
    pub patient_id: String,
    pub views: Vec<View>,
    pub sections: Sections,
    pub labels: LabelVec,
    pub split: Split,
}

impl Study {
    /// A study is usable only if it carries some report text.
    pub fn has_report(&self) -> bool {
        !self.sections.impression.is_empty() || !self.sections.findings.is_empty()
    }
}

/// Maximum context length in tokens.
pub const MAX_CONTEXT_TOKENS: usize = 45;
/// Maximum combined context + report length in tokens.
pub const MAX_TEXT_TOKENS: usize = 192;

/// Report text: the impression and findings sections stitched under their
/// headers. Absent sections render as empty so the header skeleton is
/// always present.
pub fn build_report(study: &Study) -> String {
    let mut out = String::from("impression : ");
    out.push_str(&crate::text::preprocess_text(&study.sections.impression));
    out.push_str(" findings : ");
    out.push_str(&crate::text::preprocess_text(&study.sections.findings));
    out
}

/// Context text: indication then history, both optional.
pub fn build_context(study: &Study) -> String {
    let ind = crate::text::preprocess_text(&study.sections.indication);
    let hist = crate::text::preprocess_text(&study.sections.history);
    match (ind.is_empty(), hist.is_empty()) {
        (true, true) => String::new(),
        (false, true) => ind,
        (true, false) => hist,
        (false, false) => {
            let mut s = ind;
            s.push(' ');
            s.push_str(&hist);
            s
        }
    }
}

/// One model input/target pair. `views` holds 1 image (single-view) or 2
/// (multi-view); text is tokenized and truncated to the caps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub study_id: String,
    pub views: Vec<View>,
    pub context: TokenSeq,
    pub report: TokenSeq,
    pub labels: LabelVec,
    /// Report token count before truncation: the difficulty signal.
    pub report_length: usize,
}

fn make_sample(study: &Study, vocab: &Vocab, views: Vec<View>) -> TrainingSample {
    let mut context = vocab.encode(&build_context(study));
    context.truncate(MAX_CONTEXT_TOKENS);
    let mut report = vocab.encode(&build_report(study));
    let report_length = report.len();
    report.truncate(MAX_TEXT_TOKENS.saturating_sub(context.len()));
    TrainingSample {
        study_id: study.study_id.clone(),
        views,
        context,
        report,
        labels: study.labels,
        report_length,
    }
}

/// Single-view pairing: one sample per frontal image, report duplicated;
/// non-frontal views dropped. No frontal view → no samples.
pub fn pair_views_single(study: &Study, vocab: &Vocab) -> Vec<TrainingSample> {
    study
        .views
        .iter()
        .filter(|v| v.tag.is_frontal())
        .map(|v| make_sample(study, vocab, vec![v.clone()]))
        .collect()
}

/// Multi-view pairing into exactly two views per sample, each containing at
/// least one frontal image:
///   - with non-frontal views present, each frontal pairs with each
///     non-frontal (in study order);
///   - otherwise frontal images pair among themselves (all unordered pairs);
///   - a lone frontal image pairs with itself.
///
/// No frontal view → no samples.
pub fn pair_views_multi(study: &Study, vocab: &Vocab) -> Vec<TrainingSample> {
    let frontal: Vec<&View> = study.views.iter().filter(|v| v.tag.is_frontal()).collect();
    let other: Vec<&View> = study.views.iter().filter(|v| !v.tag.is_frontal()).collect();
    if frontal.is_empty() {
        return Vec::new();
    }
    let mut pairs: Vec<(View, View)> = Vec::new();
    if !other.is_empty() {
        for f in &frontal {
            for o in &other {
                pairs.push(((*f).clone(), (*o).clone()));
            }
        }
    }
    if frontal.len() >= 2 {
        for i in 0..frontal.len() {
            for j in i + 1..frontal.len() {
                pairs.push((frontal[i].clone(), frontal[j].clone()));
            }
        }
    } else if other.is_empty() {
        pairs.push((frontal[0].clone(), frontal[0].clone()));
    }
    pairs
        .into_iter()
        .map(|(a, b)| make_sample(study, vocab, vec![a, b]))
        .collect()
}
