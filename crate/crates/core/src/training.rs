//! Losses, the epoch loop with curriculum integration, validation cadence,
//! early stopping, and checkpoint selection.
//!
//! The total loss per sample is `lm + w_cls * mlc`: teacher-forced token
//! cross-entropy over the report (context rows are visible but unscored)
//! plus the mean of fourteen per-pathology weighted cross-entropies.
//!
//! Epoch budgets are stated in *effective* epochs `N_e`. Without the
//! curriculum the loop runs `N_e` full-corpus epochs and validates after
//! each; with a curriculum drawing a fraction `f` per epoch it runs
//! `round(N_e / f)` epochs and validates every `round(1 / f)`, so both
//! variants push the same number of samples through the model and produce
//! comparable validation schedules.
//!
//! Model selection maximizes `AVG_NLG = METEOR/4 + ROUGE-L/4 + ΣBLEU/8` on
//! greedy generations for a fixed validation subsample; early stopping
//! counts validations without improvement against the patience.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::curriculum::{assign_bins, epoch_sample_weights, sample_epoch, CurriculumError};
use crate::data::{LabelVec, TrainingSample, NUM_CLASSES, NUM_PATHOLOGIES};
use crate::metrics::{evaluate, EvalReport, MetricsError};
use crate::model::{DecodeMode, GraphBuilder, Model, ModelError};
use crate::optim::{AdamW, AdamWConfig, OptimError};
use crate::rng::Rng;
use crate::synth::rule_label;
use crate::tensor::{Graph, TensorError, TensorId};
use crate::text::{TokenSeq, Vocab};

/// RNG stream tags; each epoch gets its own derived stream.
pub const SHUFFLE_STREAM: u64 = 0x7368_7566; // "shuf"
pub const CURRICULUM_STREAM: u64 = 0x6375_7272; // "curr"

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    BadConfig { reason: String },
    /// An epoch produced no samples to train on.
    EmptyEpoch { epoch: usize },
    EmptyValidation,
    NonFiniteLoss { epoch: usize, step: usize, lm: f64, mlc: f64 },
    /// The classifier is enabled but no class weights were supplied.
    MissingClassWeights,
    /// Classifier logits are not `[14, 4]`.
    HeadShapeMismatch { rows: usize, cols: usize },
    Model(ModelError),
    Metrics(MetricsError),
    Optim(OptimError),
    Curriculum(CurriculumError),
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}

impl From<MetricsError> for TrainError {
    fn from(e: MetricsError) -> Self {
        TrainError::Metrics(e)
    }
}

impl From<OptimError> for TrainError {
    fn from(e: OptimError) -> Self {
        TrainError::Optim(e)
    }
}

impl From<CurriculumError> for TrainError {
    fn from(e: CurriculumError) -> Self {
        TrainError::Curriculum(e)
    }
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::BadConfig { reason } => write!(f, "bad training config: {reason}"),
            TrainError::EmptyEpoch { epoch } => write!(f, "epoch {epoch} drew no samples"),
            TrainError::EmptyValidation => write!(f, "validation split is empty"),
            TrainError::NonFiniteLoss { epoch, step, lm, mlc } => write!(
                f,
                "non-finite loss at epoch {epoch} step {step} (lm={lm}, mlc={mlc})"
            ),
            TrainError::MissingClassWeights => {
                write!(f, "classifier enabled but class weights missing")
            }
            TrainError::HeadShapeMismatch { rows, cols } => write!(
                f,
                "expected {NUM_PATHOLOGIES}x{NUM_CLASSES} classifier logits, got {rows}x{cols}"
            ),
            TrainError::Model(e) => write!(f, "{e}"),
            TrainError::Metrics(e) => write!(f, "{e}"),
            TrainError::Optim(e) => write!(f, "{e}"),
            TrainError::Curriculum(e) => write!(f, "{e}"),
        }
    }
}

// ── class weights and the multi-label loss ──────────────────────────────

/// Per-pathology class weights `[14][4]`, indexed by `Label::index()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(pub [[f64; NUM_CLASSES]; NUM_PATHOLOGIES]);

/// Inverse-frequency class weights from the training labels, one row per
/// pathology: `w_c = 1 / count_c` (zero for unseen classes), rescaled so
/// each row's mean over the four classes is one. The mean-one normalization
/// makes the weights invariant to corpus size.
pub fn compute_class_weights(labels: &[LabelVec]) -> ClassWeights {
    let mut weights = [[0.0; NUM_CLASSES]; NUM_PATHOLOGIES];
    for d in 0..NUM_PATHOLOGIES {
        let mut counts = [0usize; NUM_CLASSES];
        for l in labels {
            counts[l[d].index()] += 1;
        }
        let mut row = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            if counts[c] > 0 {
                row[c] = 1.0 / counts[c] as f64;
            }
        }
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            let scale = NUM_CLASSES as f64 / sum;
            for w in row.iter_mut() {
                *w *= scale;
            }
        }
        weights[d] = row;
    }
    ClassWeights(weights)
}

/// Mean weighted cross-entropy over independent heads: `logits` is `[D, C]`,
/// row `d` scored against `targets[d]` with that row's class weights. Used
/// with `D = 14` by the model path but dimension-generic for testing.
pub fn multi_head_ce(
    graph: &mut Graph<'_>,
    logits: TensorId,
    targets: &[usize],
    class_weights: &[[f64; NUM_CLASSES]],
) -> Result<TensorId, TrainError> {
    let shape = graph.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != targets.len() || shape[0] != class_weights.len() {
        return Err(TrainError::HeadShapeMismatch {
            rows: shape.first().copied().unwrap_or(0),
            cols: shape.get(1).copied().unwrap_or(0),
        });
    }
    let heads = targets.len();
    let mut total: Option<TensorId> = None;
    for d in 0..heads {
        let row = graph.slice_rows(logits, d, 1)?;
        let ce = graph.cross_entropy(row, &[Some(targets[d])], Some(&class_weights[d]))?;
        total = Some(match total {
            None => ce,
            Some(t) => graph.add(t, ce)?,
        });
    }
    let total = total.ok_or(TrainError::HeadShapeMismatch { rows: 0, cols: 0 })?;
    Ok(graph.scale(total, 1.0 / heads as f64)?)
}

/// The fourteen-head classification loss for one sample's `[14, 4]` logits.
pub fn mlc_loss(
    builder: &mut GraphBuilder<'_>,
    logits: TensorId,
    labels: &LabelVec,
    weights: &ClassWeights,
) -> Result<TensorId, TrainError> {
    let shape = builder.graph.shape(logits);
    if shape != [NUM_PATHOLOGIES, NUM_CLASSES] {
        return Err(TrainError::HeadShapeMismatch {
            rows: shape.first().copied().unwrap_or(0),
            cols: shape.get(1).copied().unwrap_or(0),
        });
    }
    let targets: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    multi_head_ce(&mut builder.graph, logits, &targets, &weights.0)
}

/// Loss components of one sample or one averaged batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub lm_loss: f64,
    pub mlc_loss: f64,
    pub w_cls: f64,
    /// `lm_loss + w_cls * mlc_loss`.
    pub total: f64,
}

/// One sample's loss values and parameter gradients (full coverage: every
/// parameter appears, untouched ones as zeros).
#[derive(Debug, Clone)]
pub struct SampleGrads {
    pub loss: LossBreakdown,
    pub grads: BTreeMap<String, Vec<f64>>,
}

/// Forward + backward for one sample: encode views, teacher-forced decode
/// with token cross-entropy over the report, plus the weighted multi-label
/// loss when the classifier is enabled.
///
/// A non-finite loss is not an error here: the backward pass is skipped and
/// the breakdown is returned with zero gradients so the caller can abort
/// with its own context (the trainer reports epoch and step).
pub fn sample_grads(
    model: &Model,
    sample: &TrainingSample,
    w_cls: f64,
    class_weights: Option<&ClassWeights>,
) -> Result<SampleGrads, TrainError> {
    let mut b = GraphBuilder::new(model);
    let enc = b.encode_views(&sample.views)?;
    let dec = b.decode(&enc, &sample.context, &sample.report)?;
    let lm = b.graph.cross_entropy(dec.logits, &dec.lm_targets, None)?;
    let (mlc_value, total) = if model.config.classifier {
        let weights = class_weights.ok_or(TrainError::MissingClassWeights)?;
        let logits = b.classify(&enc)?;
        let mlc = mlc_loss(&mut b, logits, &sample.labels, weights)?;
        let scaled = b.graph.scale(mlc, w_cls)?;
        let total = b.graph.add(lm, scaled)?;
        (b.graph.item(mlc), total)
    } else {
        (0.0, lm)
    };
    if b.graph.item(total).is_finite() {
        b.graph.backward(total)?;
    }
    Ok(SampleGrads {
        loss: LossBreakdown {
            lm_loss: b.graph.item(lm),
            mlc_loss: mlc_value,
            w_cls,
            total: b.graph.item(total),
        },
        grads: b.grad_by_name(),
    })
}

// ── executors and sinks ─────────────────────────────────────────────────

/// Fans per-sample work across workers. Both methods must return results in
/// input order; the trainer reduces them sequentially so that parallel and
/// serial execution produce bit-identical runs.
pub trait BatchExecutor {
    fn map_grads(
        &self,
        model: &Model,
        samples: &[&TrainingSample],
        w_cls: f64,
        class_weights: Option<&ClassWeights>,
    ) -> Result<Vec<SampleGrads>, TrainError>;

    /// Greedy-decode a report for each sample from its views and context.
    fn map_tokens(
        &self,
        model: &Model,
        samples: &[&TrainingSample],
    ) -> Result<Vec<TokenSeq>, TrainError>;
}

/// Runs everything on the calling thread.
pub struct SerialExecutor;

impl BatchExecutor for SerialExecutor {
    fn map_grads(
        &self,
        model: &Model,
        samples: &[&TrainingSample],
        w_cls: f64,
        class_weights: Option<&ClassWeights>,
    ) -> Result<Vec<SampleGrads>, TrainError> {
        samples
            .iter()
            .map(|s| sample_grads(model, s, w_cls, class_weights))
            .collect()
    }

    fn map_tokens(
        &self,
        model: &Model,
        samples: &[&TrainingSample],
    ) -> Result<Vec<TokenSeq>, TrainError> {
        samples
            .iter()
            .map(|s| {
                crate::model::generate(model, &s.views, &s.context, DecodeMode::Greedy)
                    .map_err(TrainError::from)
            })
            .collect()
    }
}

/// One optimizer step's log record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub epoch: usize,
    /// Global step counter, 1-based, monotone across epochs.
    pub step: usize,
    pub lm_loss: f64,
    pub mlc_loss: f64,
    pub total: f64,
}

/// Everything a sink needs to persist one validation checkpoint.
pub struct ValidationEvent<'a> {
    pub model: &'a Model,
    pub epoch: usize,
    /// 0-based validation counter.
    pub index: usize,
    pub report: &'a EvalReport,
    pub avg_nlg: f64,
}

/// Receives training events. `on_validation` must persist (or name) a
/// checkpoint and return its handle, recorded in the run state.
pub trait TrainSink {
    fn on_step(&mut self, _log: &StepLog) {}
    fn on_validation(&mut self, event: &ValidationEvent<'_>) -> String;
}

/// In-memory sink for tests and library callers; names checkpoints
/// `checkpoint-<index>` without persisting anything.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub steps: Vec<StepLog>,
    /// `(epoch, avg_nlg)` per validation.
    pub validations: Vec<(usize, f64)>,
}

impl TrainSink for MemorySink {
    fn on_step(&mut self, log: &StepLog) {
        self.steps.push(log.clone());
    }

    fn on_validation(&mut self, event: &ValidationEvent<'_>) -> String {
        self.validations.push((event.epoch, event.avg_nlg));
        format!("checkpoint-{:03}", event.index)
    }
}

// ── configuration and run state ─────────────────────────────────────────

/// Length-curriculum settings: quantile bin count and per-epoch fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumPlan {
    pub bins: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Effective-epoch budget `N_e`; see the module docs for how the
    /// curriculum stretches it.
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Classification loss weight in `total = lm + w_cls * mlc`.
    pub w_cls: f64,
    pub curriculum: Option<CurriculumPlan>,
    /// Validations without improvement before stopping.
    pub patience: usize,
    /// Greedy-decode at most this many validation samples per validation.
    pub validation_cap: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults for quick experiments.
    pub fn toy() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            epochs: 8,
            lr: 5e-4,
            weight_decay: 0.01,
            w_cls: 0.1,
            curriculum: Some(CurriculumPlan {
                bins: 10,
                fraction: 0.25,
            }),
            patience: 8,
            validation_cap: 256,
            seed: 0,
        }
    }

    /// Reference-scale defaults: batch 32, lr 5e-5, 30 effective epochs,
    /// 10 bins at fraction 0.25, loss weight 0.1, patience 7.
    pub fn paper() -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            epochs: 30,
            lr: 5e-5,
            weight_decay: 0.01,
            w_cls: 0.1,
            curriculum: Some(CurriculumPlan {
                bins: 10,
                fraction: 0.25,
            }),
            patience: 7,
            validation_cap: 256,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |reason: &str| {
            Err(TrainError::BadConfig {
                reason: String::from(reason),
            })
        };
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.epochs == 0 {
            return bad("epoch budget must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive and finite");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        if !(self.w_cls.is_finite() && self.w_cls >= 0.0) {
            return bad("classification loss weight must be non-negative");
        }
        if let Some(c) = &self.curriculum {
            if c.bins == 0 {
                return bad("curriculum needs at least one bin");
            }
            if !(c.fraction > 0.0 && c.fraction <= 1.0) {
                return bad("curriculum fraction must lie in (0, 1]");
            }
        }
        if self.patience == 0 {
            return bad("patience must be at least one validation");
        }
        if self.validation_cap == 0 {
            return bad("validation cap must be positive");
        }
        Ok(())
    }
}

/// Total epochs to run and the validation interval implied by the config:
/// `(N_e, 1)` plain, `(round(N_e/f), round(1/f))` with a curriculum.
pub fn epoch_plan(config: &TrainConfig) -> (usize, usize) {
    match &config.curriculum {
        None => (config.epochs, 1),
        Some(c) => {
            let total = (config.epochs as f64 / c.fraction).round() as usize;
            let interval = (1.0 / c.fraction).round() as usize;
            (total.max(1), interval.max(1))
        }
    }
}

/// One validation's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRecord {
    pub epoch: usize,
    pub index: usize,
    pub avg_nlg: f64,
    /// Checkpoint handle returned by the sink.
    pub checkpoint: String,
    pub report: EvalReport,
}

/// Where a finished (or stopped) run ended up.
#[derive(Debug, Clone, Default)]
pub struct RunState {
    pub epochs_run: usize,
    pub steps_run: usize,
    pub samples_seen: usize,
    pub validations: Vec<ValidationRecord>,
    /// Index into `validations` of the best AVG_NLG (ties earliest).
    pub best: Option<usize>,
    pub stopped_early: bool,
}

impl RunState {
    pub fn best_record(&self) -> Option<&ValidationRecord> {
        self.best.map(|i| &self.validations[i])
    }
}

/// Improvement tracker: stops once the number of consecutive observations
/// without strict improvement reaches the patience.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<f64>,
    since_improvement: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> EarlyStopper {
        EarlyStopper {
            patience,
            best: None,
            since_improvement: 0,
        }
    }

    pub fn observe(&mut self, score: f64) -> StopDecision {
        let improved = self.best.is_none_or(|b| score > b);
        if improved {
            self.best = Some(score);
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        StopDecision {
            improved,
            stop: self.since_improvement >= self.patience,
        }
    }
}

// ── scoring ─────────────────────────────────────────────────────────────

/// Validation score: `METEOR/4 + ROUGE-L/4 + (BLEU-1..4 summed)/8`.
/// The weights sum to one, so perfect metrics score exactly 1.
pub fn avg_nlg(report: &EvalReport) -> f64 {
    report.meteor / 4.0 + report.rouge_l / 4.0 + report.bleu.iter().sum::<f64>() / 8.0
}

/// Index of the best score, ties to the earliest. `None` for an empty
/// history.
pub fn select_checkpoint(history: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in history.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if v > history[b] => best = Some(i),
            _ => {}
        }
    }
    best
}

// ── the training loop ───────────────────────────────────────────────────

fn shuffled(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.next_below(i as u64 + 1) as usize;
        idx.swap(i, j);
    }
    idx
}

/// Mean the per-sample losses and gradients, reducing in sample order so
/// results do not depend on executor parallelism.
fn reduce_batch(results: Vec<SampleGrads>) -> (LossBreakdown, BTreeMap<String, Vec<f64>>) {
    let n = results.len() as f64;
    let mut iter = results.into_iter();
    let first = iter.next().expect("reduce_batch needs at least one sample");
    let mut loss = first.loss;
    let mut grads = first.grads;
    for r in iter {
        loss.lm_loss += r.loss.lm_loss;
        loss.mlc_loss += r.loss.mlc_loss;
        loss.total += r.loss.total;
        for (name, g) in r.grads {
            let acc = grads.get_mut(&name).expect("gradient maps share keys");
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += v;
            }
        }
    }
    loss.lm_loss /= n;
    loss.mlc_loss /= n;
    loss.total /= n;
    for g in grads.values_mut() {
        for v in g.iter_mut() {
            *v /= n;
        }
    }
    (loss, grads)
}

fn apply_step(
    model: &mut Model,
    opt: &mut AdamW,
    grads: &BTreeMap<String, Vec<f64>>,
) -> Result<(), TrainError> {
    // Both maps iterate in name order, so slots, params, and grads align.
    let gvecs: Vec<&[f64]> = grads.values().map(|v| v.as_slice()).collect();
    let mut handles: Vec<(&str, &mut [f64])> = model
        .params
        .iter_mut()
        .map(|(k, p)| (k.as_str(), p.data.as_mut_slice()))
        .collect();
    opt.step(&mut handles, &gvecs)?;
    Ok(())
}

/// Greedy-generate reports for the first `cap` validation samples and score
/// them: NLG metrics against the reference reports, clinical F1 between
/// rule-labeled generations and the true labels.
pub fn validate(
    model: &Model,
    val_samples: &[TrainingSample],
    vocab: &Vocab,
    cap: usize,
    executor: &dyn BatchExecutor,
) -> Result<EvalReport, TrainError> {
    if val_samples.is_empty() {
        return Err(TrainError::EmptyValidation);
    }
    let subset = &val_samples[..val_samples.len().min(cap)];
    let refs: Vec<&TrainingSample> = subset.iter().collect();
    let generated = executor.map_tokens(model, &refs)?;
    let references: Vec<TokenSeq> = subset.iter().map(|s| s.report.clone()).collect();
    let pred_labels: Vec<LabelVec> = generated
        .iter()
        .map(|t| rule_label(&vocab.decode(t)))
        .collect();
    let true_labels: Vec<LabelVec> = subset.iter().map(|s| s.labels).collect();
    Ok(evaluate(&generated, &references, &pred_labels, &true_labels)?)
}

/// Run the full loop: epochs of batched AdamW steps over teacher-forced
/// samples, periodic validation with checkpointing through the sink, early
/// stopping, and best-checkpoint tracking. Deterministic for a fixed
/// `(model, samples, config)` regardless of the executor's parallelism.
pub fn train(
    model: &mut Model,
    train_samples: &[TrainingSample],
    val_samples: &[TrainingSample],
    vocab: &Vocab,
    config: &TrainConfig,
    executor: &dyn BatchExecutor,
    sink: &mut dyn TrainSink,
) -> Result<RunState, TrainError> {
    config.validate()?;
    model.config.validate()?;
    if train_samples.is_empty() {
        return Err(TrainError::EmptyEpoch { epoch: 1 });
    }

    let class_weights = if model.config.classifier {
        let labels: Vec<LabelVec> = train_samples.iter().map(|s| s.labels).collect();
        Some(compute_class_weights(&labels))
    } else {
        None
    };

    let (total_epochs, interval) = epoch_plan(config);
    let bins = match &config.curriculum {
        Some(c) => {
            let lengths: Vec<usize> = train_samples.iter().map(|s| s.report_length).collect();
            Some(assign_bins(&lengths, c.bins)?)
        }
        None => None,
    };

    let mut opt = AdamW::new(AdamWConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamWConfig::default()
    });
    let mut stopper = EarlyStopper::new(config.patience);
    let mut state = RunState::default();
    let mut step = 0usize;

    'epochs: for epoch in 1..=total_epochs {
        let order = match (&config.curriculum, &bins) {
            (Some(c), Some(bins)) => {
                let weights = epoch_sample_weights(bins, c.bins, epoch, total_epochs)?;
                let mut rng =
                    Rng::for_stream(config.seed, CURRICULUM_STREAM.wrapping_add(epoch as u64));
                sample_epoch(&weights, c.fraction, &mut rng)?
            }
            _ => {
                let mut rng =
                    Rng::for_stream(config.seed, SHUFFLE_STREAM.wrapping_add(epoch as u64));
                shuffled(train_samples.len(), &mut rng)
            }
        };
        if order.is_empty() {
            return Err(TrainError::EmptyEpoch { epoch });
        }

        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &train_samples[i]).collect();
            let results = executor.map_grads(model, &batch, config.w_cls, class_weights.as_ref())?;
            let (loss, grads) = reduce_batch(results);
            step += 1;
            state.samples_seen += batch.len();
            if !(loss.total.is_finite() && loss.lm_loss.is_finite() && loss.mlc_loss.is_finite()) {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    step,
                    lm: loss.lm_loss,
                    mlc: loss.mlc_loss,
                });
            }
            apply_step(model, &mut opt, &grads)?;
            sink.on_step(&StepLog {
                epoch,
                step,
                lm_loss: loss.lm_loss,
                mlc_loss: loss.mlc_loss,
                total: loss.total,
            });
        }
        state.epochs_run = epoch;

        if epoch % interval == 0 {
            let report = validate(model, val_samples, vocab, config.validation_cap, executor)?;
            let avg = avg_nlg(&report);
            let index = state.validations.len();
            let checkpoint = sink.on_validation(&ValidationEvent {
                model,
                epoch,
                index,
                report: &report,
                avg_nlg: avg,
            });
            let decision = stopper.observe(avg);
            if decision.improved {
                state.best = Some(index);
            }
            state.validations.push(ValidationRecord {
                epoch,
                index,
                avg_nlg: avg,
                checkpoint,
                report,
            });
            if decision.stop {
                state.stopped_early = true;
                break 'epochs;
            }
        }
    }
    state.steps_run = step;
    Ok(state)
}
