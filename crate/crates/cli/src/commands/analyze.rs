//! `analyze`: post-hoc curves and comparisons over generation outputs —
//! metric-vs-target-length buckets, length histograms, and a paired A/B
//! comparison of two runs across seeds.

use std::path::{Path, PathBuf};

use radgen_core::analysis::{
    ab_compare, length_histograms, metrics_by_length, AnalysisError, LengthBucketSeries,
    SampleScores,
};
use radgen_core::metrics::{clinical_f1, label_predictions, meteor, rouge_l};
use serde::Serialize;

use crate::args::Parsed;
use crate::commands::eval::{load_pair, ref_labels};
use crate::commands::generate::{PredRec, RefRec};
use crate::commands::{ensure_dir, write_json, write_text};
use crate::CliError;

const HELP: &str = "usage: radgen analyze --run-a <dir>... [--run-b <dir>...] --out <dir>
                   [--bucket-width <tokens>]

Reads generation outputs (predictions.jsonl + references.jsonl) and writes
under --out:
  metrics_by_length.csv   mean METEOR / ROUGE-L / per-sample micro-F1 by
                          target-length bucket, pooled over the --run-a dirs
  length_histograms.csv   generated vs target length distributions (A side)
  ab_compare.csv          per-bucket ROUGE-L difference A - B with a paired
                          t-test over seeds (only with --run-b)
  analysis.json           everything above, plus the B-side curves

Repeat --run-a/--run-b once per seed; the i-th A dir is paired with the
i-th B dir. With a single seed the p_value column is left blank. Buckets
missing from any seed's coverage are skipped in the A/B table.";

/// Per-sample scores and lengths extracted from one run directory.
struct RunSamples {
    scores: Vec<SampleScores>,
    target_lengths: Vec<usize>,
    generated_lengths: Vec<usize>,
}

#[derive(Serialize)]
struct BucketJson {
    lo: usize,
    hi: usize,
    n: usize,
    meteor: Option<f64>,
    rouge_l: Option<f64>,
    f1_micro: Option<f64>,
}

#[derive(Serialize)]
struct HistogramJson {
    length: usize,
    count_generated: usize,
    count_target: usize,
}

#[derive(Serialize)]
struct AbJson {
    bucket_lo: usize,
    bucket_hi: usize,
    delta: f64,
    t: Option<f64>,
    p_value: Option<f64>,
}

#[derive(Serialize)]
struct AnalysisJson {
    bucket_width: usize,
    runs_a: Vec<String>,
    runs_b: Vec<String>,
    curves_a: Vec<BucketJson>,
    curves_b: Option<Vec<BucketJson>>,
    histograms_a: Vec<HistogramJson>,
    ab: Option<Vec<AbJson>>,
}

pub fn run(args: &[String]) -> Result<(), CliError> {
    let p = Parsed::parse(args, &["--out", "--bucket-width"], &["--run-a", "--run-b"], &[])?;
    if p.help {
        println!("{HELP}");
        return Ok(());
    }
    let runs_a = p.repeated("--run-a");
    let runs_b = p.repeated("--run-b");
    if runs_a.is_empty() {
        return Err(CliError::Usage(String::from("at least one --run-a directory is required")));
    }
    if !runs_b.is_empty() && runs_b.len() != runs_a.len() {
        return Err(CliError::Usage(format!(
            "{} --run-a dirs but {} --run-b dirs; seeds are paired by position",
            runs_a.len(),
            runs_b.len()
        )));
    }
    let out = PathBuf::from(p.required("--out")?);
    let width: usize = p.num_or("--bucket-width", 25)?;

    let a_runs = load_runs(runs_a)?;
    let b_runs = if runs_b.is_empty() { None } else { Some(load_runs(runs_b)?) };

    let pooled_a = pool(&a_runs);
    let curves_a = buckets_json(&series(&pooled_a, width)?);
    let histograms_a = histograms_json(&pooled_a, width)?;
    let curves_b = match &b_runs {
        Some(runs) => Some(buckets_json(&series(&pool(runs), width)?)),
        None => None,
    };
    let ab = match &b_runs {
        Some(runs) => Some(ab_rows(&a_runs, runs, width)?),
        None => None,
    };

    ensure_dir(&out)?;
    write_text(&out.join("metrics_by_length.csv"), &curves_csv(&curves_a))?;
    write_text(&out.join("length_histograms.csv"), &histograms_csv(&histograms_a))?;
    if let Some(rows) = &ab {
        write_text(&out.join("ab_compare.csv"), &ab_csv(rows))?;
    }
    let json = AnalysisJson {
        bucket_width: width,
        runs_a: runs_a.to_vec(),
        runs_b: runs_b.to_vec(),
        curves_a,
        curves_b,
        histograms_a,
        ab,
    };
    write_json(&out.join("analysis.json"), &json)?;
    println!("analyzed {} run(s) into {}", runs_a.len(), out.display());
    Ok(())
}

fn analysis_err(e: AnalysisError) -> CliError {
    CliError::Data(e.to_string())
}

fn load_runs(dirs: &[String]) -> Result<Vec<RunSamples>, CliError> {
    dirs.iter().map(|d| load_run(Path::new(d))).collect()
}

/// Score every sample of one generation output directory.
fn load_run(dir: &Path) -> Result<RunSamples, CliError> {
    let (preds, refs) = load_pair(
        &dir.join(super::generate::PREDICTIONS_FILE),
        &dir.join(super::generate::REFERENCES_FILE),
    )?;
    let mut scores = Vec::with_capacity(preds.len());
    for (p, r) in preds.iter().zip(&refs) {
        scores.push(sample_scores(p, r)?);
    }
    Ok(RunSamples {
        scores,
        target_lengths: refs.iter().map(|r| r.tokens.len()).collect(),
        generated_lengths: preds.iter().map(|p| p.tokens.len()).collect(),
    })
}

/// METEOR, ROUGE-L, and label micro-F1 for a single sample.
fn sample_scores(pred: &PredRec, target: &RefRec) -> Result<SampleScores, CliError> {
    let pred_labels = label_predictions(&[pred.text.as_str()]);
    let truth = ref_labels(target)?;
    let clinical = clinical_f1(&pred_labels, &[truth])
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(SampleScores {
        meteor: meteor(&pred.tokens, &target.tokens),
        rouge_l: rouge_l(&pred.tokens, &target.tokens),
        f1_micro: clinical.f1_micro,
    })
}

/// Concatenate runs in flag order (used for the pooled A/B-side curves).
fn pool(runs: &[RunSamples]) -> RunSamples {
    let mut out = RunSamples {
        scores: Vec::new(),
        target_lengths: Vec::new(),
        generated_lengths: Vec::new(),
    };
    for run in runs {
        out.scores.extend_from_slice(&run.scores);
        out.target_lengths.extend_from_slice(&run.target_lengths);
        out.generated_lengths.extend_from_slice(&run.generated_lengths);
    }
    out
}

fn series(run: &RunSamples, width: usize) -> Result<LengthBucketSeries, CliError> {
    metrics_by_length(&run.scores, &run.target_lengths, width).map_err(analysis_err)
}

fn buckets_json(series: &LengthBucketSeries) -> Vec<BucketJson> {
    series
        .buckets
        .iter()
        .map(|b| BucketJson {
            lo: b.lo,
            hi: b.hi,
            n: b.n,
            meteor: b.mean.map(|m| m.meteor),
            rouge_l: b.mean.map(|m| m.rouge_l),
            f1_micro: b.mean.map(|m| m.f1_micro),
        })
        .collect()
}

fn histograms_json(run: &RunSamples, width: usize) -> Result<Vec<HistogramJson>, CliError> {
    let hist = length_histograms(&run.generated_lengths, &run.target_lengths, width)
        .map_err(analysis_err)?;
    Ok(hist
        .bins
        .iter()
        .map(|b| HistogramJson {
            length: b.lo,
            count_generated: b.generated,
            count_target: b.target,
        })
        .collect())
}

/// Paired A/B rows over the buckets every seed covers.
fn ab_rows(a: &[RunSamples], b: &[RunSamples], width: usize) -> Result<Vec<AbJson>, CliError> {
    let a_series: Vec<LengthBucketSeries> =
        a.iter().map(|r| series(r, width)).collect::<Result<_, _>>()?;
    let b_series: Vec<LengthBucketSeries> =
        b.iter().map(|r| series(r, width)).collect::<Result<_, _>>()?;
    let nb = a_series[0].buckets.len();
    let covered: Vec<usize> = (0..nb)
        .filter(|&i| {
            a_series.iter().chain(&b_series).all(|s| s.buckets[i].mean.is_some())
        })
        .collect();
    if covered.is_empty() {
        return Ok(Vec::new());
    }
    let lane = |series: &[LengthBucketSeries]| -> Vec<Vec<f64>> {
        series
            .iter()
            .map(|s| {
                covered
                    .iter()
                    .map(|&i| s.buckets[i].mean.expect("covered bucket").rouge_l)
                    .collect()
            })
            .collect()
    };
    let a_means = lane(&a_series);
    let b_means = lane(&b_series);

    let mut rows = Vec::with_capacity(covered.len());
    if a.len() >= 2 {
        let tested = ab_compare(&a_means, &b_means).map_err(analysis_err)?;
        for (slot, row) in covered.iter().zip(tested) {
            let bucket = &a_series[0].buckets[*slot];
            rows.push(AbJson {
                bucket_lo: bucket.lo,
                bucket_hi: bucket.hi,
                delta: row.delta,
                t: Some(row.t),
                p_value: Some(row.p_value),
            });
        }
    } else {
        // One seed: report the difference, but no test.
        for (k, &slot) in covered.iter().enumerate() {
            let bucket = &a_series[0].buckets[slot];
            rows.push(AbJson {
                bucket_lo: bucket.lo,
                bucket_hi: bucket.hi,
                delta: a_means[0][k] - b_means[0][k],
                t: None,
                p_value: None,
            });
        }
    }
    Ok(rows)
}

fn curves_csv(buckets: &[BucketJson]) -> String {
    let mut csv = String::from("bucket_lo,bucket_hi,n,meteor,rouge_l,f1_micro\n");
    for b in buckets {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.lo,
            b.hi,
            b.n,
            cell(b.meteor),
            cell(b.rouge_l),
            cell(b.f1_micro)
        ));
    }
    csv
}

fn histograms_csv(bins: &[HistogramJson]) -> String {
    let mut csv = String::from("length,count_generated,count_target\n");
    for b in bins {
        csv.push_str(&format!("{},{},{}\n", b.length, b.count_generated, b.count_target));
    }
    csv
}

fn ab_csv(rows: &[AbJson]) -> String {
    let mut csv = String::from("bucket,delta,p_value\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            r.bucket_lo,
            r.delta,
            r.p_value.map(|p| p.to_string()).unwrap_or_default()
        ));
    }
    csv
}
