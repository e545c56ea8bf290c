//! Synthetic study generator and its rule-based labeler.
//!
//! Reports are rendered from a closed sentence grammar: every pathology has
//! one fixed clause per mention class, and [`rule_label`] recovers labels by
//! exact clause matching. Because no clause string occurs inside any other
//! sentence the grammar can emit (a unit test proves this), generation and
//! labeling are exact inverses — clinical-accuracy scores computed against
//! this labeler carry no approximation error.
//!
//! Images encode the same labels visually: one geometric glyph per Positive
//! pathology, placed on a grid cell whose position depends on the view, over
//! seeded noise. Every study keeps at least one frontal view so no generated
//! data is lost to the view-pairing rules.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{
    Image, Label, LabelVec, Sections, Split, Study, View, ViewTag, NUM_PATHOLOGIES,
};
use crate::rng::Rng;

/// Knobs controlling how hard the synthetic task is.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyProfile {
    /// Side length of the square images.
    pub image_size: usize,
    /// Amplitude of the uniform pixel noise, in `[0, 0.5]`.
    pub noise: f64,
    /// Upper bound on filler sentences inserted into the findings section.
    pub max_fillers: usize,
}

impl Default for DifficultyProfile {
    fn default() -> Self {
        DifficultyProfile {
            image_size: 32,
            noise: 0.08,
            max_fillers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorError {
    EmptyCorpus,
    InvalidProfile { reason: String },
}

impl core::fmt::Display for GeneratorError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GeneratorError::EmptyCorpus => write!(f, "corpus size must be at least 1"),
            GeneratorError::InvalidProfile { reason } => {
                write!(f, "invalid difficulty profile: {reason}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GeneratorError {}

impl DifficultyProfile {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.image_size < 8 {
            return Err(GeneratorError::InvalidProfile {
                reason: alloc::format!("image_size {} below minimum 8", self.image_size),
            });
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return Err(GeneratorError::InvalidProfile {
                reason: alloc::format!("noise {} outside [0, 0.5]", self.noise),
            });
        }
        if self.max_fillers > 16 {
            return Err(GeneratorError::InvalidProfile {
                reason: alloc::format!("max_fillers {} above 16", self.max_fillers),
            });
        }
        Ok(())
    }
}

// ── the grammar ─────────────────────────────────────────────────────

/// Fixed clause per (pathology, class), indexed by [`Label::index`] for the
/// first three classes; Missing emits nothing. Strings are already in
/// normalized form (lowercase, closed alphabet, single spaces).
const CLAUSES: [[&str; 3]; NUM_PATHOLOGIES] = [
    [
        "the cardiomediastinal silhouette is enlarged.",
        "the cardiomediastinal silhouette is not enlarged.",
        "the cardiomediastinal silhouette may be enlarged.",
    ],
    [
        "cardiomegaly is present.",
        "no cardiomegaly is identified.",
        "cardiomegaly may be present.",
    ],
    [
        "lung opacity is present.",
        "no lung opacity is identified.",
        "lung opacity may be present.",
    ],
    [
        "a nodular opacity is present.",
        "no nodular opacity is identified.",
        "a nodular opacity may be present.",
    ],
    [
        "pulmonary edema is present.",
        "no pulmonary edema is identified.",
        "pulmonary edema may be present.",
    ],
    [
        "focal consolidation is present.",
        "no focal consolidation is identified.",
        "focal consolidation may be present.",
    ],
    [
        "pneumonia is present.",
        "no pneumonia is identified.",
        "pneumonia may be present.",
    ],
    [
        "atelectasis is present.",
        "no atelectasis is identified.",
        "atelectasis may be present.",
    ],
    [
        "a pneumothorax is present.",
        "no pneumothorax is identified.",
        "a pneumothorax may be present.",
    ],
    [
        "a pleural effusion is present.",
        "no pleural effusion is identified.",
        "a pleural effusion may be present.",
    ],
    [
        "pleural thickening is present.",
        "no pleural thickening is identified.",
        "pleural thickening may be present.",
    ],
    [
        "a rib fracture is present.",
        "no rib fracture is identified.",
        "a rib fracture may be present.",
    ],
    [
        "support devices are present.",
        "no support devices are identified.",
        "support devices may be present.",
    ],
    [
        "no acute cardiopulmonary process is identified.",
        "an acute cardiopulmonary process is present.",
        "an acute cardiopulmonary process may be present.",
    ],
];

/// Summary sentence emitted whenever a report carries no positive label.
/// Deliberately not a clause: it matches nothing in [`rule_label`].
pub const ALL_CLEAR: &str = "stable examination without acute change.";

/// Unlabeled findings sentences used to vary report length.
const FILLERS: [&str; 8] = [
    "the trachea is midline.",
    "the imaged upper abdomen is unremarkable.",
    "lung volumes are low.",
    "the visualized osseous structures are intact.",
    "there is no free air below the right hemidiaphragm.",
    "the aorta is mildly tortuous.",
    "degenerative changes are noted in the thoracic spine.",
    "surgical clips project over the left upper quadrant.",
];

/// Follow-up sentences appended after a positive clause.
const ELABORATIONS: [&str; 4] = [
    "this finding is new compared to the prior examination.",
    "this finding has progressed since the prior examination.",
    "this finding is unchanged.",
    "clinical correlation is recommended.",
];

/// Neutral impression sentences for reports with nothing to summarize.
const IMPRESSION_FILLERS: [&str; 3] = [
    "findings discussed above.",
    "no significant interval change.",
    "stable appearance of the chest.",
];

const INDICATIONS: [&str; 6] = [
    "shortness of breath.",
    "chest pain.",
    "fever and cough.",
    "evaluation of line placement.",
    "trauma.",
    "follow up examination.",
];

const HISTORY_COMPLAINTS: [&str; 6] = [
    "dyspnea",
    "pleuritic pain",
    "known malignancy",
    "recent fall",
    "a central line",
    "copd",
];

/// The clause a given (pathology, class) pair renders; `None` for Missing.
pub fn clause(pathology: usize, label: Label) -> Option<&'static str> {
    match label {
        Label::Missing => None,
        other => Some(CLAUSES[pathology][other.index()]),
    }
}

/// Recover the label vector from report text by exact clause matching.
/// Total on arbitrary input; within one pathology Positive takes precedence
/// over Negative over Uncertain, and an unmatched pathology is Missing.
pub fn rule_label(text: &str) -> LabelVec {
    let norm = crate::text::preprocess_text(text);
    let mut out = [Label::Missing; NUM_PATHOLOGIES];
    for (p, clauses) in CLAUSES.iter().enumerate() {
        for (c, pattern) in clauses.iter().enumerate() {
            if norm.contains(pattern) {
                out[p] = Label::from_index(c).expect("class index below 3");
                break;
            }
        }
    }
    out
}

// ── report rendering ────────────────────────────────────────────────

const NO_FINDING: usize = NUM_PATHOLOGIES - 1;

fn render_with_layout(
    labels: &LabelVec,
    rng: &mut Rng,
    max_fillers: usize,
    with_impression: bool,
    with_findings: bool,
) -> (String, String) {
    let any_positive = labels.contains(&Label::Positive);

    let mut impression_parts: Vec<&str> = Vec::new();
    if let Some(c) = clause(NO_FINDING, labels[NO_FINDING]) {
        impression_parts.push(c);
    }
    if !any_positive {
        impression_parts.push(ALL_CLEAR);
    }
    if impression_parts.is_empty() {
        impression_parts.push(IMPRESSION_FILLERS[rng.next_below(IMPRESSION_FILLERS.len() as u64) as usize]);
    }

    let mut findings_parts: Vec<&str> = Vec::new();
    for (p, &label) in labels.iter().enumerate().take(NO_FINDING) {
        if let Some(c) = clause(p, label) {
            findings_parts.push(c);
            if label == Label::Positive {
                findings_parts
                    .push(ELABORATIONS[rng.next_below(ELABORATIONS.len() as u64) as usize]);
            }
        }
    }
    if max_fillers > 0 {
        for _ in 0..rng.next_below(max_fillers as u64 + 1) {
            let filler = FILLERS[rng.next_below(FILLERS.len() as u64) as usize];
            let at = rng.next_below(findings_parts.len() as u64 + 1) as usize;
            findings_parts.insert(at, filler);
        }
    }

    if !with_impression {
        // The summary sentences move into findings so that a report with no
        // positive label always carries the all-clear sentence somewhere.
        let mut merged = impression_parts;
        merged.extend(findings_parts);
        return (String::new(), merged.join(" "));
    }
    if !with_findings {
        return (impression_parts.join(" "), String::new());
    }
    if findings_parts.is_empty() {
        findings_parts.push(FILLERS[rng.next_below(FILLERS.len() as u64) as usize]);
    }
    (impression_parts.join(" "), findings_parts.join(" "))
}

/// Render impression and findings text for a label vector (both sections
/// present). Works for arbitrary vectors and satisfies
/// `rule_label(impression + findings) == labels` exactly.
pub fn render_report(labels: &LabelVec, rng: &mut Rng, profile: &DifficultyProfile) -> (String, String) {
    render_with_layout(labels, rng, profile.max_fillers, true, true)
}

// ── label sampling ──────────────────────────────────────────────────

/// Positive-class probability per pathology (No Finding excluded; it is
/// derived). Seven of the fourteen categories end up positive in under 5%
/// of studies, mirroring the long-tailed prevalence of the real data.
const POSITIVE_RATE: [f64; 13] = [
    0.030, // Enlarged Cardiomediastinum
    0.180, // Cardiomegaly
    0.170, // Lung Opacity
    0.025, // Lung Lesion
    0.110, // Edema
    0.030, // Consolidation
    0.035, // Pneumonia
    0.140, // Atelectasis
    0.012, // Pneumothorax
    0.170, // Pleural Effusion
    0.018, // Pleural Other
    0.025, // Fracture
    0.200, // Support Devices
];

const NEGATIVE_RATE: f64 = 0.15;
const UNCERTAIN_RATE: f64 = 0.05;

fn sample_labels(rng: &mut Rng) -> LabelVec {
    let mut labels = [Label::Missing; NUM_PATHOLOGIES];
    for (p, &pos) in POSITIVE_RATE.iter().enumerate() {
        let u = rng.next_f64();
        labels[p] = if u < pos {
            Label::Positive
        } else if u < pos + NEGATIVE_RATE {
            Label::Negative
        } else if u < pos + NEGATIVE_RATE + UNCERTAIN_RATE {
            Label::Uncertain
        } else {
            Label::Missing
        };
    }
    let any_positive = labels[..NO_FINDING].contains(&Label::Positive);
    let u = rng.next_f64();
    labels[NO_FINDING] = if any_positive {
        if u < 0.7 {
            Label::Negative
        } else {
            Label::Missing
        }
    } else if u < 0.8 {
        Label::Positive
    } else if u < 0.85 {
        Label::Uncertain
    } else {
        Label::Missing
    };
    labels
}

// ── image rendering ─────────────────────────────────────────────────

const GRID: usize = 4;
const BACKGROUND: f64 = 0.15;
const GLYPH_INTENSITY: f64 = 0.85;

/// Grid cell of a pathology's glyph under a view's mirroring.
fn glyph_cell(pathology: usize, tag: ViewTag) -> (usize, usize) {
    let (row, col) = (pathology / GRID, pathology % GRID);
    match tag {
        ViewTag::Ap => (row, col),
        ViewTag::Pa => (row, GRID - 1 - col),
        ViewTag::Lateral => (GRID - 1 - row, col),
        ViewTag::Ll => (GRID - 1 - row, GRID - 1 - col),
    }
}

/// Render one view: a glyph per positive pathology plus uniform noise.
pub fn render_view(
    labels: &LabelVec,
    tag: ViewTag,
    profile: &DifficultyProfile,
    rng: &mut Rng,
) -> Image {
    let size = profile.image_size;
    let mut img = Image {
        size,
        pixels: vec![BACKGROUND; size * size],
    };
    let cell = size / GRID;
    for (p, &label) in labels.iter().enumerate().take(NO_FINDING) {
        if label != Label::Positive {
            continue;
        }
        let (row, col) = glyph_cell(p, tag);
        let (y0, x0) = (row * cell, col * cell);
        let c = cell as f64 / 2.0;
        for dy in 0..cell {
            for dx in 0..cell {
                let (fy, fx) = (dy as f64 + 0.5 - c, dx as f64 + 0.5 - c);
                let inside = match p % 3 {
                    // square with a one-pixel margin
                    0 => dy >= 1 && dy < cell - 1 && dx >= 1 && dx < cell - 1,
                    // disc
                    1 => fy * fy + fx * fx <= (c - 1.0) * (c - 1.0),
                    // cross
                    _ => crate::fmath::abs(fy) < c / 3.0 || crate::fmath::abs(fx) < c / 3.0,
                };
                if inside {
                    img.pixels[(y0 + dy) * size + x0 + dx] = GLYPH_INTENSITY;
                }
            }
        }
    }
    if profile.noise > 0.0 {
        for px in img.pixels.iter_mut() {
            *px = (*px + profile.noise * (2.0 * rng.next_f64() - 1.0)).clamp(0.0, 1.0);
        }
    }
    img
}

// ── study assembly ──────────────────────────────────────────────────

/// Complaint aligned with a pathology, when one exists, so the context
/// carries a weak signal about the report.
fn complaint_for(labels: &LabelVec) -> Option<&'static str> {
    const MAP: [(usize, &str); 4] = [
        (12, "evaluation of line placement."), // Support Devices
        (4, "shortness of breath."),           // Edema
        (6, "fever and cough."),               // Pneumonia
        (11, "trauma."),                       // Fracture
    ];
    MAP.iter()
        .find(|&&(p, _)| labels[p] == Label::Positive)
        .map(|&(_, c)| c)
}

fn generate_study(index: usize, patient: usize, split: Split, seed: u64, profile: &DifficultyProfile) -> Study {
    let mut rng = Rng::for_stream(seed, 1 + index as u64);
    let mut labels = sample_labels(&mut rng);

    // Section layout: most studies carry both sections; a slice are
    // impression-only (no findings to describe) or findings-only (no
    // dictated summary). Labels are restricted first so the rendered text
    // still determines them exactly.
    let layout = rng.next_f64();
    let (with_impression, with_findings) = if layout < 0.08 {
        for l in labels[..NO_FINDING].iter_mut() {
            *l = Label::Missing;
        }
        (true, false)
    } else if layout < 0.13 {
        labels[NO_FINDING] = Label::Missing;
        (false, true)
    } else {
        (true, true)
    };
    let (impression, findings) =
        render_with_layout(&labels, &mut rng, profile.max_fillers, with_impression, with_findings);

    let indication = if rng.next_f64() < 0.9 {
        match complaint_for(&labels) {
            Some(c) if rng.next_f64() < 0.7 => String::from(c),
            _ => String::from(INDICATIONS[rng.next_below(INDICATIONS.len() as u64) as usize]),
        }
    } else {
        String::new()
    };
    let history = if rng.next_f64() < 0.7 {
        let complaint =
            HISTORY_COMPLAINTS[rng.next_below(HISTORY_COMPLAINTS.len() as u64) as usize];
        alloc::format!("_ year old patient with {complaint}.")
    } else {
        String::new()
    };

    // Always at least one frontal view so pairing rules keep the study.
    let mut views = Vec::new();
    let frontal = if rng.next_f64() < 0.5 { ViewTag::Ap } else { ViewTag::Pa };
    views.push(frontal);
    if rng.next_f64() < 0.4 {
        views.push(ViewTag::Lateral);
    }
    if rng.next_f64() < 0.15 {
        views.push(if frontal == ViewTag::Ap { ViewTag::Pa } else { ViewTag::Ap });
    }
    let views = views
        .into_iter()
        .map(|tag| View {
            tag,
            image: render_view(&labels, tag, profile, &mut rng),
        })
        .collect();

    Study {
        study_id: alloc::format!("s{index:06}"),
        patient_id: alloc::format!("p{patient:05}"),
        views,
        sections: Sections {
            impression,
            findings,
            indication,
            history,
        },
        labels,
        split,
    }
}

/// Generate a deterministic corpus. Studies are grouped into patients (a
/// quarter of patients contribute two studies) and splits are assigned per
/// patient, roughly 80/10/10 train/validation/test.
pub fn generate_synthetic_corpus(
    n_studies: usize,
    seed: u64,
    profile: &DifficultyProfile,
) -> Result<Vec<Study>, GeneratorError> {
    if n_studies == 0 {
        return Err(GeneratorError::EmptyCorpus);
    }
    profile.validate()?;

    // A dedicated stream drives the patient/split structure so per-study
    // content streams stay index-pure (parallelizable by study).
    let mut structure = Rng::for_stream(seed, 0);
    let mut out = Vec::with_capacity(n_studies);
    let mut patient = 0usize;
    let mut split = draw_split(&mut structure);
    let mut studies_for_patient = 1 + usize::from(structure.next_f64() < 0.25);
    for index in 0..n_studies {
        if studies_for_patient == 0 {
            patient += 1;
            split = draw_split(&mut structure);
            studies_for_patient = 1 + usize::from(structure.next_f64() < 0.25);
        }
        studies_for_patient -= 1;
        out.push(generate_study(index, patient, split, seed, profile));
    }
    Ok(out)
}

fn draw_split(rng: &mut Rng) -> Split {
    let u = rng.next_f64();
    if u < 0.8 {
        Split::Train
    } else if u < 0.9 {
        Split::Validation
    } else {
        Split::Test
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_report;
    use alloc::string::ToString;

    /// Every sentence the grammar can emit, clause or not.
    fn all_sentences() -> Vec<String> {
        let mut v: Vec<String> = Vec::new();
        for row in CLAUSES.iter() {
            v.extend(row.iter().map(|s| s.to_string()));
        }
        v.push(ALL_CLEAR.to_string());
        v.extend(FILLERS.iter().map(|s| s.to_string()));
        v.extend(ELABORATIONS.iter().map(|s| s.to_string()));
        v.extend(IMPRESSION_FILLERS.iter().map(|s| s.to_string()));
        v.extend(INDICATIONS.iter().map(|s| s.to_string()));
        for c in HISTORY_COMPLAINTS {
            v.push(alloc::format!("_ year old patient with {c}."));
        }
        v.push("impression :".to_string());
        v.push("findings :".to_string());
        v
    }

    #[test]
    fn no_clause_occurs_inside_any_other_sentence() {
        // The exactness of rule_label rests on this: a clause can only
        // appear in text that deliberately contains it.
        let sentences = all_sentences();
        let clauses: Vec<&str> = CLAUSES.iter().flatten().copied().collect();
        for c in &clauses {
            for s in &sentences {
                if s == c {
                    continue;
                }
                assert!(
                    !s.contains(c),
                    "clause {c:?} occurs inside sentence {s:?}"
                );
            }
        }
    }

    #[test]
    fn grammar_sentences_are_already_normalized() {
        for s in all_sentences() {
            assert_eq!(crate::text::preprocess_text(&s), s, "{s:?}");
        }
    }

    #[test]
    fn label_render_round_trip_on_random_vectors() {
        let mut rng = Rng::new(7);
        let profile = DifficultyProfile::default();
        for _ in 0..100 {
            let mut labels = [Label::Missing; NUM_PATHOLOGIES];
            for l in labels.iter_mut() {
                *l = Label::from_index(rng.next_below(4) as usize).unwrap();
            }
            let (impression, findings) = render_report(&labels, &mut rng, &profile);
            let report = alloc::format!("impression : {impression} findings : {findings}");
            assert_eq!(rule_label(&report), labels, "report: {report}");
        }
    }

    #[test]
    fn empty_text_labels_all_missing() {
        assert_eq!(rule_label(""), [Label::Missing; NUM_PATHOLOGIES]);
    }

    #[test]
    fn single_clause_labels_one_pathology() {
        let mut expected = [Label::Missing; NUM_PATHOLOGIES];
        expected[4] = Label::Positive; // Edema
        assert_eq!(rule_label("pulmonary edema is present."), expected);
    }

    #[test]
    fn no_positives_renders_the_all_clear_sentence() {
        let mut rng = Rng::new(3);
        let profile = DifficultyProfile::default();
        let mut labels = [Label::Missing; NUM_PATHOLOGIES];
        labels[1] = Label::Negative;
        let (impression, _) = render_report(&labels, &mut rng, &profile);
        assert!(impression.contains(ALL_CLEAR));
    }

    #[test]
    fn more_positives_make_longer_reports() {
        let profile = DifficultyProfile {
            max_fillers: 0,
            ..DifficultyProfile::default()
        };
        let mut labels = [Label::Missing; NUM_PATHOLOGIES];
        let mut rng = Rng::new(1);
        let (i0, f0) = render_report(&labels, &mut rng, &profile);
        labels[6] = Label::Positive;
        let mut rng = Rng::new(1);
        let (i1, f1) = render_report(&labels, &mut rng, &profile);
        assert!(i1.len() + f1.len() > i0.len() + f0.len());
    }

    #[test]
    fn corpus_is_deterministic_and_seed_sensitive() {
        let profile = DifficultyProfile::default();
        let a = generate_synthetic_corpus(20, 42, &profile).unwrap();
        let b = generate_synthetic_corpus(20, 42, &profile).unwrap();
        let c = generate_synthetic_corpus(20, 43, &profile).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn corpus_studies_satisfy_the_structural_invariants() {
        let corpus = generate_synthetic_corpus(200, 11, &DifficultyProfile::default()).unwrap();
        for s in &corpus {
            assert!(s.has_report(), "{} lacks report text", s.study_id);
            assert!(!s.views.is_empty());
            assert!(s.views.iter().any(|v| v.tag.is_frontal()));
            assert_eq!(rule_label(&build_report(s)), s.labels);
        }
        // Studies of one patient share a split.
        for w in corpus.windows(2) {
            if w[0].patient_id == w[1].patient_id {
                assert_eq!(w[0].split, w[1].split);
            }
        }
        // All three splits occur at this size.
        for split in [Split::Train, Split::Validation, Split::Test] {
            assert!(corpus.iter().any(|s| s.split == split), "{split:?} empty");
        }
    }

    #[test]
    fn half_the_pathologies_are_rare() {
        let rare = POSITIVE_RATE.iter().filter(|&&p| p < 0.05).count();
        assert_eq!(rare, 7); // No Finding, the 14th, is common by coherence.
    }

    #[test]
    fn report_length_tracks_positive_count() {
        let corpus = generate_synthetic_corpus(400, 5, &DifficultyProfile::default()).unwrap();
        let xs: Vec<f64> = corpus
            .iter()
            .map(|s| {
                s.labels.iter().filter(|&&l| l == Label::Positive).count() as f64
            })
            .collect();
        let ys: Vec<f64> = corpus
            .iter()
            .map(|s| crate::text::split_words(&build_report(s)).len() as f64)
            .collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for i in 0..xs.len() {
            cov += (xs[i] - mx) * (ys[i] - my);
            vx += (xs[i] - mx) * (xs[i] - mx);
            vy += (ys[i] - my) * (ys[i] - my);
        }
        let r = cov / crate::fmath::sqrt(vx * vy);
        assert!(r > 0.5, "correlation {r}");
    }

    #[test]
    fn glyphs_land_in_view_dependent_cells() {
        let profile = DifficultyProfile {
            noise: 0.0,
            ..DifficultyProfile::default()
        };
        let mut labels = [Label::Missing; NUM_PATHOLOGIES];
        labels[0] = Label::Positive; // cell (0,0) on AP
        let mut rng = Rng::new(1);
        let ap = render_view(&labels, ViewTag::Ap, &profile, &mut rng);
        let pa = render_view(&labels, ViewTag::Pa, &profile, &mut rng);
        let cell = profile.image_size / GRID;
        // Center of cell (0,0) lit on AP, dark on PA (mirrored to (0,3)).
        let center = |row: usize, col: usize| (row * cell + cell / 2) * profile.image_size + col * cell + cell / 2;
        assert_eq!(ap.pixels[center(0, 0)], GLYPH_INTENSITY);
        assert_eq!(pa.pixels[center(0, 0)], BACKGROUND);
        assert_eq!(pa.pixels[center(0, GRID - 1)], GLYPH_INTENSITY);
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        let bad = DifficultyProfile {
            noise: 0.9,
            ..DifficultyProfile::default()
        };
        assert!(matches!(
            generate_synthetic_corpus(1, 0, &bad),
            Err(GeneratorError::InvalidProfile { .. })
        ));
        assert_eq!(
            generate_synthetic_corpus(0, 0, &DifficultyProfile::default()),
            Err(GeneratorError::EmptyCorpus)
        );
    }
}
