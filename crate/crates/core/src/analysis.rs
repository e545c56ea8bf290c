//! Post-hoc analyses over evaluation outputs: metric-vs-target-length
//! curves, generated-vs-target length histograms, and a paired A/B
//! comparison across seeds with a t-test p-value per length bucket.
//!
//! Everything here is a pure batch transform over plain numbers; file
//! formats (CSV/JSON) live with the command-line layer.

use alloc::vec::Vec;

use crate::data::MAX_TEXT_TOKENS;
use crate::fmath;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    /// Bucket width must lie in `1..=MAX_TEXT_TOKENS`.
    BadBucketWidth { width: usize },
    /// Token lengths beyond the decoding cap cannot be bucketed.
    LengthOutOfRange { length: usize },
    /// Score and length slices must pair up one-to-one.
    LengthMismatch { scores: usize, lengths: usize },
    /// Paired comparison needs the same number of seeds in both runs.
    SeedMismatch { a: usize, b: usize },
    /// A t-test over seeds needs at least two pairs.
    TooFewSeeds { seeds: usize },
    /// All per-seed series must cover the same buckets.
    BucketMismatch { expected: usize, got: usize },
}

impl core::fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AnalysisError::BadBucketWidth { width } => {
                write!(f, "bucket width {width} outside 1..={MAX_TEXT_TOKENS}")
            }
            AnalysisError::LengthOutOfRange { length } => {
                write!(f, "length {length} exceeds the {MAX_TEXT_TOKENS}-token cap")
            }
            AnalysisError::LengthMismatch { scores, lengths } => {
                write!(f, "{scores} score rows but {lengths} lengths")
            }
            AnalysisError::SeedMismatch { a, b } => {
                write!(f, "run A has {a} seeds but run B has {b}")
            }
            AnalysisError::TooFewSeeds { seeds } => {
                write!(f, "paired t-test needs at least 2 seeds, got {seeds}")
            }
            AnalysisError::BucketMismatch { expected, got } => {
                write!(f, "expected {expected} buckets per seed, got {got}")
            }
        }
    }
}

// ── metric-vs-length curves ─────────────────────────────────────────────

/// Per-sample metric values carried into the length analysis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleScores {
    pub meteor: f64,
    pub rouge_l: f64,
    pub f1_micro: f64,
}

/// One length bucket: `[lo, hi)` in tokens, except the final bucket which
/// also includes `hi` so the series exactly covers `[0, MAX_TEXT_TOKENS]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthBucket {
    pub lo: usize,
    pub hi: usize,
    pub n: usize,
    /// Arithmetic mean of the scores that fell here; `None` when empty.
    pub mean: Option<SampleScores>,
}

/// Mean metric values grouped by target report length.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthBucketSeries {
    pub bucket_width: usize,
    pub buckets: Vec<LengthBucket>,
}

impl LengthBucketSeries {
    pub fn total_count(&self) -> usize {
        self.buckets.iter().map(|b| b.n).sum()
    }
}

/// Number of buckets of `width` covering `[0, MAX_TEXT_TOKENS]`.
fn bucket_count(width: usize) -> usize {
    MAX_TEXT_TOKENS.div_ceil(width)
}

/// Bucket index for a token length (the final bucket absorbs the cap).
fn bucket_of(length: usize, width: usize) -> usize {
    (length / width).min(bucket_count(width) - 1)
}

fn check_width(width: usize) -> Result<(), AnalysisError> {
    if width == 0 || width > MAX_TEXT_TOKENS {
        return Err(AnalysisError::BadBucketWidth { width });
    }
    Ok(())
}

/// Group per-sample scores by target length into buckets of `bucket_width`
/// tokens and take per-bucket arithmetic means. Empty buckets are reported
/// with a zero count and no mean.
pub fn metrics_by_length(
    scores: &[SampleScores],
    target_lengths: &[usize],
    bucket_width: usize,
) -> Result<LengthBucketSeries, AnalysisError> {
    check_width(bucket_width)?;
    if scores.len() != target_lengths.len() {
        return Err(AnalysisError::LengthMismatch {
            scores: scores.len(),
            lengths: target_lengths.len(),
        });
    }
    let nb = bucket_count(bucket_width);
    let mut sums = alloc::vec![SampleScores::default(); nb];
    let mut counts = alloc::vec![0usize; nb];
    for (score, &len) in scores.iter().zip(target_lengths) {
        if len > MAX_TEXT_TOKENS {
            return Err(AnalysisError::LengthOutOfRange { length: len });
        }
        let i = bucket_of(len, bucket_width);
        sums[i].meteor += score.meteor;
        sums[i].rouge_l += score.rouge_l;
        sums[i].f1_micro += score.f1_micro;
        counts[i] += 1;
    }
    let buckets = (0..nb)
        .map(|i| {
            let n = counts[i];
            LengthBucket {
                lo: i * bucket_width,
                hi: ((i + 1) * bucket_width).min(MAX_TEXT_TOKENS),
                n,
                mean: (n > 0).then(|| SampleScores {
                    meteor: sums[i].meteor / n as f64,
                    rouge_l: sums[i].rouge_l / n as f64,
                    f1_micro: sums[i].f1_micro / n as f64,
                }),
            }
        })
        .collect();
    Ok(LengthBucketSeries {
        bucket_width,
        buckets,
    })
}

// ── length histograms ───────────────────────────────────────────────────

/// One shared histogram bin with counts from both distributions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthBin {
    pub lo: usize,
    pub hi: usize,
    pub generated: usize,
    pub target: usize,
}

/// Generated-vs-target length distributions over shared bin edges, plus
/// how many sequences sit exactly at the truncation cap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthHistograms {
    pub bin_width: usize,
    pub bins: Vec<LengthBin>,
    /// Sequences of exactly `MAX_TEXT_TOKENS` tokens — the pile-up that
    /// truncation produces at the cap.
    pub truncated_generated: usize,
    pub truncated_target: usize,
}

/// Histogram both length distributions over the same `[0, MAX_TEXT_TOKENS]`
/// bins and count cap-length sequences separately.
pub fn length_histograms(
    generated: &[usize],
    target: &[usize],
    bin_width: usize,
) -> Result<LengthHistograms, AnalysisError> {
    check_width(bin_width)?;
    let nb = bucket_count(bin_width);
    let mut bins: Vec<LengthBin> = (0..nb)
        .map(|i| LengthBin {
            lo: i * bin_width,
            hi: ((i + 1) * bin_width).min(MAX_TEXT_TOKENS),
            generated: 0,
            target: 0,
        })
        .collect();
    let mut truncated = [0usize; 2];
    for (which, lengths) in [generated, target].into_iter().enumerate() {
        for &len in lengths {
            if len > MAX_TEXT_TOKENS {
                return Err(AnalysisError::LengthOutOfRange { length: len });
            }
            let bin = &mut bins[bucket_of(len, bin_width)];
            if which == 0 {
                bin.generated += 1;
            } else {
                bin.target += 1;
            }
            if len == MAX_TEXT_TOKENS {
                truncated[which] += 1;
            }
        }
    }
    Ok(LengthHistograms {
        bin_width,
        bins,
        truncated_generated: truncated[0],
        truncated_target: truncated[1],
    })
}

// ── paired A/B comparison ───────────────────────────────────────────────

/// Paired t-test outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    /// Mean of the paired differences.
    pub mean_diff: f64,
    pub t: f64,
    /// Degrees of freedom (`pairs - 1`).
    pub dof: usize,
    /// Two-sided p-value.
    pub p: f64,
}

/// Two-sided paired t-test on per-seed differences. Degenerate zero-variance
/// samples resolve by the sign of the mean: no difference at all gives
/// `t = 0, p = 1`; a constant nonzero offset gives `t = ±inf, p = 0`.
pub fn paired_t(diffs: &[f64]) -> Result<TTest, AnalysisError> {
    let n = diffs.len();
    if n < 2 {
        return Err(AnalysisError::TooFewSeeds { seeds: n });
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (nf - 1.0);
    let dof = n - 1;
    let (t, p) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 0.0)
        }
    } else {
        let t = mean / fmath::sqrt(var / nf);
        (t, t_two_sided_p(t, dof as f64))
    };
    Ok(TTest {
        mean_diff: mean,
        t,
        dof,
        p,
    })
}

/// One bucket's A-minus-B comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbBucket {
    /// Bucket index into the shared series.
    pub bucket: usize,
    /// Mean over seeds of the paired per-seed difference (A − B).
    pub delta: f64,
    pub t: f64,
    pub p_value: f64,
}

/// Compare two run arms bucket by bucket: `a[seed][bucket]` and
/// `b[seed][bucket]` hold one metric value per seed and bucket, paired by
/// seed index. Emits the mean delta and a two-sided paired t-test p-value
/// per bucket, with no accept/reject judgment.
pub fn ab_compare(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<AbBucket>, AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::SeedMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(AnalysisError::TooFewSeeds { seeds: a.len() });
    }
    let nb = a[0].len();
    for row in a.iter().chain(b.iter()) {
        if row.len() != nb {
            return Err(AnalysisError::BucketMismatch {
                expected: nb,
                got: row.len(),
            });
        }
    }
    (0..nb)
        .map(|j| {
            let diffs: Vec<f64> = a.iter().zip(b).map(|(ra, rb)| ra[j] - rb[j]).collect();
            let test = paired_t(&diffs)?;
            Ok(AbBucket {
                bucket: j,
                delta: test.mean_diff,
                t: test.t,
                p_value: test.p,
            })
        })
        .collect()
}

// ── Student's t distribution via the regularized incomplete beta ────────

/// Two-sided p-value of a t statistic: `I_x(ν/2, 1/2)` at
/// `x = ν / (ν + t²)`.
fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    betainc_reg(dof / (dof + t * t), dof / 2.0, 0.5)
}

/// Natural log of the gamma function (Lanczos approximation, g = 7).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    // Reflection for x < 0.5; the analysis only ever calls with x > 0.
    if x < 0.5 {
        let pi = core::f64::consts::PI;
        return fmath::ln(pi / fmath::sin(pi * x)) - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * fmath::ln(2.0 * core::f64::consts::PI) + (x + 0.5) * fmath::ln(t) - t + fmath::ln(acc)
}

/// Regularized incomplete beta function `I_x(a, b)` by the standard
/// continued-fraction expansion (modified Lentz), switching to the
/// symmetric tail for fast convergence.
fn betainc_reg(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
        + a * fmath::ln(x)
        + b * fmath::ln(1.0 - x);
    let front = fmath::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz method).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if fmath::abs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..200 {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if fmath::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if fmath::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if fmath::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if fmath::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if fmath::abs(del - 1.0) < EPS {
            break;
        }
    }
    h
}
