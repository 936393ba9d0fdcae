//! Fine-tuning loop.
//!
//! Batch order is a pure function of `(seed, epoch)` and pair sampling of
//! `(seed, step)`, so a run resumed from a checkpoint (parameters plus
//! optimizer moments) retraces the uninterrupted run exactly.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{base_id, TranslationGroup};
use crate::checkpoint::{self, Checkpoint, CheckpointError};
use crate::corpus::QaRecord;
use crate::encoder::{self, EncoderConfig, EncoderError, EncoderParams, Upstream};
use crate::eval::{self, DecodeConfig, EvalError, EvalLog, JaccardReport};
use crate::features::{self, Feature, FeatureConfig, FeatureError};
use crate::losses::{self, LossBreakdown, LossError};
use crate::optim::{self, AdamState, AdamW, OptimError};
use crate::rng;
use crate::tokenizer::Vocab;

pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const EVAL_LOG: &str = "eval_log.jsonl";
pub const PLOT_CSV: &str = "jaccard_plot.csv";
pub const BEST_FILE: &str = "best.json";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training split has no usable features")]
    EmptyTrainSet,
    #[error("record {0} has no translation group")]
    UnresolvableGroup(String),
    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(u64),
    #[error("step {step}: {source}")]
    NonFiniteGradient {
        step: u64,
        #[source]
        source: OptimError,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot resume: {0}")]
    Resume(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_steps: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub w_contrastive: f64,
    pub contrastive_interval: u64,
    pub max_contrastive_steps: u64,
    /// Block whose output feeds the contrastive loss, counted from 1.
    pub tap_layer: usize,
    pub eval_interval: u64,
    pub seed: u64,
    /// Global gradient-norm bound; off when `None`.
    pub clip_grad_norm: Option<f64>,
    /// Train only on windows that contain the answer.
    pub drop_negative_windows: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            max_steps: 5000,
            learning_rate: 3e-5,
            weight_decay: 0.01,
            w_contrastive: 0.05,
            contrastive_interval: 500,
            max_contrastive_steps: 1000,
            tap_layer: 3,
            eval_interval: 500,
            seed: 0,
            clip_grad_norm: None,
            drop_negative_windows: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, enc: &EncoderConfig) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 || self.max_steps == 0 || self.eval_interval == 0 || self.contrastive_interval == 0 {
            return bad("batch_size, max_steps, eval_interval and contrastive_interval must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if !(self.w_contrastive >= 0.0 && self.w_contrastive.is_finite()) {
            return bad(format!("w_contrastive {} must be non-negative", self.w_contrastive));
        }
        if self.w_contrastive > 0.0 && self.contrastive_interval > self.max_steps {
            return bad(format!(
                "contrastive_interval {} exceeds max_steps {}",
                self.contrastive_interval, self.max_steps
            ));
        }
        if self.tap_layer == 0 || self.tap_layer > enc.n_layers {
            return bad(format!("tap_layer {} outside 1..={}", self.tap_layer, enc.n_layers));
        }
        if let Some(c) = self.clip_grad_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip_grad_norm {c} must be positive"));
            }
        }
        Ok(())
    }

    /// Whether the contrastive term is part of the loss at `step` (1-based).
    pub fn contrastive_applies(&self, step: u64) -> bool {
        self.w_contrastive > 0.0 && step.is_multiple_of(self.contrastive_interval) && step <= self.max_contrastive_steps
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW::new(self.learning_rate, self.weight_decay)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub l_task: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_contrastive: Option<f64>,
    pub l_total: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub params: EncoderParams,
    pub optimizer: AdamState,
    pub log: Vec<StepLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedBatch {
    pub original: Vec<Feature>,
    pub paired: Vec<Feature>,
}

/// The window used for each group member when it is drawn as a pair:
/// the first window holding the answer, else window 0.
#[derive(Debug, Clone, Default)]
pub struct PairIndex {
    windows: HashMap<String, Feature>,
}

impl PairIndex {
    pub fn build(
        groups: &BTreeMap<String, TranslationGroup>,
        vocab: &Vocab,
        feature_cfg: &FeatureConfig,
    ) -> Result<Self, FeatureError> {
        let members: Vec<&QaRecord> = groups.values().flat_map(|g| g.members()).collect();
        let windows = members
            .par_iter()
            .map(|r| {
                let mut feats = features::build_features(r, vocab, feature_cfg)?;
                let pick = feats.iter().position(Feature::has_answer).unwrap_or(0);
                Ok((r.id.clone(), feats.swap_remove(pick)))
            })
            .collect::<Result<HashMap<_, _>, FeatureError>>()?;
        Ok(Self { windows })
    }

    pub fn get(&self, record_id: &str) -> Option<&Feature> {
        self.windows.get(record_id)
    }
}

/// Pairs every row with a sibling from its translation group, drawn
/// uniformly among the other members, or with itself in a singleton group.
pub fn sample_pair_batch<R: RngCore>(
    batch: &[Feature],
    groups: &BTreeMap<String, TranslationGroup>,
    index: &PairIndex,
    rng: &mut R,
) -> Result<PairedBatch, TrainError> {
    let mut paired = Vec::with_capacity(batch.len());
    for f in batch {
        let group =
            groups.get(base_id(&f.record_id)).ok_or_else(|| TrainError::UnresolvableGroup(f.record_id.clone()))?;
        let others: Vec<&QaRecord> = group.members().filter(|r| r.id != f.record_id).collect();
        let chosen = if group.len() >= 2 && !others.is_empty() {
            &others[rng::index(rng, others.len())].id
        } else {
            &f.record_id
        };
        let feature = if chosen == &f.record_id && index.get(chosen).is_none() {
            f.clone()
        } else {
            index.get(chosen).cloned().ok_or_else(|| TrainError::UnresolvableGroup(chosen.clone()))?
        };
        paired.push(feature);
    }
    Ok(PairedBatch { original: batch.to_vec(), paired })
}

fn labels(batch: &[Feature]) -> (Vec<usize>, Vec<usize>) {
    batch.iter().map(|f| (f.start_label, f.end_label)).unzip()
}

fn step_loss(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    batch: &[Feature],
    paired: Option<&[Feature]>,
    w: f64,
    grads: Option<&mut EncoderParams>,
) -> Result<LossBreakdown, TrainError> {
    let out = encoder::forward(params, cfg, batch)?;
    let (starts, ends) = labels(batch);
    let (l_task, d_start, d_end) =
        losses::task_loss_grad(&out.start_logits, &out.end_logits, &starts, &ends, Some(&out.mask))?;
    let Some(paired) = paired else {
        if let Some(grads) = grads {
            let up = Upstream { d_start, d_end, d_tapped: None };
            encoder::backward_into(params, cfg, &out, &up, grads)?;
        }
        return Ok(losses::total_loss(l_task, 0.0, w, false));
    };
    let out_p = encoder::forward(params, cfg, paired)?;
    let o = encoder::gap(&out.tapped, &out.mask)?;
    let p = encoder::gap(&out_p.tapped, &out_p.mask)?;
    let (l_c, d_o, d_p) = losses::contrastive_loss_grad(&o, &p)?;
    if let Some(grads) = grads {
        let up = Upstream { d_start, d_end, d_tapped: Some(losses::gap_backward(&(d_o * w), &out.mask)) };
        encoder::backward_into(params, cfg, &out, &up, grads)?;
        let (n, t) = out_p.mask.dim();
        let up_p = Upstream { d_tapped: Some(losses::gap_backward(&(d_p * w), &out_p.mask)), ..Upstream::zeros(n, t) };
        encoder::backward_into(params, cfg, &out_p, &up_p, grads)?;
    }
    Ok(losses::total_loss(l_task, l_c, w, true))
}

/// Loss of one step without gradients. With `paired`, the contrastive term
/// is applied with weight `w`.
pub fn compute_loss(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    batch: &[Feature],
    paired: Option<&[Feature]>,
    w: f64,
) -> Result<LossBreakdown, TrainError> {
    step_loss(params, cfg, batch, paired, w, None)
}

/// Loss and the exact gradient of `l_total` for one step.
pub fn loss_and_grads(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    batch: &[Feature],
    paired: Option<&[Feature]>,
    w: f64,
) -> Result<(LossBreakdown, EncoderParams), TrainError> {
    let mut grads = EncoderParams::zeros(cfg);
    let b = step_loss(params, cfg, batch, paired, w, Some(&mut grads))?;
    Ok((b, grads))
}

/// Data shared by every step of a run.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a [QaRecord],
    pub validation: &'a [QaRecord],
    pub vocab: &'a Vocab,
    pub feature_cfg: FeatureConfig,
    pub decode_cfg: DecodeConfig,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Starting parameters; random initialization from the seed otherwise.
    pub init: Option<EncoderParams>,
    /// Where logs and `ckpt-{step}` directories go. Nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Continue from the latest checkpoint in `out_dir`.
    pub resume: bool,
    /// Stop after this step as if interrupted.
    pub stop_after: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Highest overall validation Jaccard, earliest step on ties; the final
    /// parameters when there is no validation split.
    pub best: Checkpoint,
    pub best_report: Option<JaccardReport>,
    pub evals: Vec<EvalLog>,
    pub state: TrainState,
}

#[derive(Debug, Serialize, Deserialize)]
struct BestPointer {
    step: u64,
    jaccard_overall: Option<f64>,
    checkpoint: String,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, TrainError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| TrainError::Resume(format!("{}: {e}", path.display())))?);
    }
    Ok(out)
}

fn jsonl_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("log entries serialize");
    s.push('\n');
    s
}

fn rewrite_jsonl<T: Serialize>(path: &Path, entries: &[T]) -> Result<(), TrainError> {
    let text: String = entries.iter().map(jsonl_line).collect();
    fs::write(path, text).map_err(io_err(path))
}

struct Outputs {
    dir: PathBuf,
    train_log: File,
}

impl Outputs {
    fn append_step(&mut self, entry: &StepLog) -> Result<(), TrainError> {
        let path = self.dir.join(TRAIN_LOG);
        self.train_log.write_all(jsonl_line(entry).as_bytes()).map_err(io_err(&path))
    }
}

fn training_features(data: &TrainData<'_>, cfg: &TrainConfig) -> Result<Vec<Feature>, TrainError> {
    let per_record = data
        .train
        .par_iter()
        .map(|r| features::build_features(r, data.vocab, &data.feature_cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let feats: Vec<Feature> =
        per_record.into_iter().flatten().filter(|f| !cfg.drop_negative_windows || f.has_answer()).collect();
    if feats.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    Ok(feats)
}

/// Feature indices of the batch used at `step` (1-based).
pub fn batch_for_step(n_features: usize, batch_size: usize, seed: u64, step: u64) -> Vec<usize> {
    let per_epoch = n_features.div_ceil(batch_size) as u64;
    let b = step - 1;
    let mut batches = features::epoch_batch_indices(n_features, batch_size, seed, b / per_epoch);
    batches.swap_remove((b % per_epoch) as usize)
}

/// Fine-tunes the encoder, evaluating and checkpointing every
/// `eval_interval` steps and after the last step.
pub fn train(
    data: &TrainData<'_>,
    groups: &BTreeMap<String, TranslationGroup>,
    encoder_cfg: &EncoderConfig,
    cfg: &TrainConfig,
    opts: RunOptions,
) -> Result<TrainOutcome, TrainError> {
    let mut enc = *encoder_cfg;
    enc.tap_layer = cfg.tap_layer;
    enc.validate()?;
    cfg.validate(&enc)?;
    data.feature_cfg.validate()?;

    let feats = training_features(data, cfg)?;
    let pair_index = if cfg.w_contrastive > 0.0 {
        PairIndex::build(groups, data.vocab, &data.feature_cfg)?
    } else {
        PairIndex::default()
    };
    let adam = cfg.optimizer();

    let mut state = TrainState {
        step: 0,
        params: match &opts.init {
            Some(p) => p.clone(),
            None => encoder::init_params(&enc, cfg.seed),
        },
        optimizer: AdamState::new(&enc),
        log: Vec::new(),
    };
    if state.params.slices().iter().map(|s| s.len()).ne(EncoderParams::specs(&enc).iter().map(|s| s.numel())) {
        return Err(TrainError::InvalidConfig("initial parameters do not match the encoder config".into()));
    }
    let mut evals: Vec<EvalLog> = Vec::new();
    let mut best: Option<(u64, f64, EncoderParams, JaccardReport)> = None;

    let mut outputs = match &opts.out_dir {
        None => None,
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            if opts.resume {
                resume_into(dir, &enc, cfg, data, &mut state, &mut evals, &mut best)?;
            } else {
                for name in [TRAIN_LOG, EVAL_LOG, PLOT_CSV, BEST_FILE] {
                    let p = dir.join(name);
                    if p.exists() {
                        fs::remove_file(&p).map_err(io_err(&p))?;
                    }
                }
                for (_, old) in checkpoint::list_checkpoints(dir).map_err(io_err(dir))? {
                    fs::remove_dir_all(&old).map_err(io_err(&old))?;
                }
            }
            let path = dir.join(TRAIN_LOG);
            rewrite_jsonl(&path, &state.log)?;
            let train_log = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
            Some(Outputs { dir: dir.clone(), train_log })
        }
    };

    let last = opts.stop_after.map_or(cfg.max_steps, |s| s.min(cfg.max_steps));
    while state.step < last {
        let step = state.step + 1;
        let batch: Vec<Feature> =
            batch_for_step(feats.len(), cfg.batch_size, cfg.seed, step).into_iter().map(|i| feats[i].clone()).collect();
        let paired = if cfg.contrastive_applies(step) {
            let mut r = rng::stream(cfg.seed, "pairs", step);
            Some(sample_pair_batch(&batch, groups, &pair_index, &mut r)?.paired)
        } else {
            None
        };
        let (breakdown, mut grads) = loss_and_grads(&state.params, &enc, &batch, paired.as_deref(), cfg.w_contrastive)?;
        if !breakdown.l_total.is_finite() {
            return Err(TrainError::NonFiniteLoss(step));
        }
        if let Some(max_norm) = cfg.clip_grad_norm {
            optim::clip_grad_norm(&mut grads, max_norm);
        }
        adam.step(&enc, &mut state.params, &grads, &mut state.optimizer)
            .map_err(|source| TrainError::NonFiniteGradient { step, source })?;
        state.step = step;
        let entry = StepLog {
            step,
            l_task: breakdown.l_task,
            l_contrastive: breakdown.applied.then_some(breakdown.l_contrastive),
            l_total: breakdown.l_total,
            lr: cfg.learning_rate,
        };
        if let Some(out) = outputs.as_mut() {
            out.append_step(&entry)?;
        }
        state.log.push(entry);

        if step.is_multiple_of(cfg.eval_interval) || step == cfg.max_steps {
            let report = if data.validation.is_empty() {
                None
            } else {
                let r = eval::evaluate(
                    &state.params,
                    &enc,
                    data.validation,
                    data.vocab,
                    &data.feature_cfg,
                    &data.decode_cfg,
                )?;
                log::info!("step {step}: validation Jaccard {:.4}", r.overall);
                if best.as_ref().is_none_or(|b| r.overall > b.1) {
                    best = Some((step, r.overall, state.params.clone(), r.clone()));
                }
                evals.push(EvalLog::new(step, &r));
                Some(r)
            };
            if let Some(out) = outputs.as_ref() {
                save_progress(
                    out,
                    &enc,
                    cfg,
                    data,
                    &state,
                    &evals,
                    best.as_ref().map(|b| (b.0, b.1)),
                    report.is_some(),
                )?;
            }
        }
    }

    let (best_ckpt, best_report) = match best {
        Some((step, _, params, report)) => (
            Checkpoint {
                config: enc,
                params,
                seed: cfg.seed,
                step,
                optimizer: None,
                feature_config: Some(data.feature_cfg),
            },
            Some(report),
        ),
        None => (
            Checkpoint {
                config: enc,
                params: state.params.clone(),
                seed: cfg.seed,
                step: state.step,
                optimizer: None,
                feature_config: Some(data.feature_cfg),
            },
            None,
        ),
    };
    if let Some(out) = outputs.as_ref() {
        if best_report.is_none() && state.step == cfg.max_steps {
            write_best(&out.dir, state.step, None)?;
        }
    }
    Ok(TrainOutcome { best: best_ckpt, best_report, evals, state })
}

/// Stage-2 training of the QA head on a high-resource dataset: the same
/// loop with the contrastive term disabled.
pub fn pretrain_qa_head(
    data: &TrainData<'_>,
    encoder_cfg: &EncoderConfig,
    cfg: &TrainConfig,
    opts: RunOptions,
) -> Result<TrainOutcome, TrainError> {
    let cfg = TrainConfig { w_contrastive: 0.0, ..*cfg };
    train(data, &BTreeMap::new(), encoder_cfg, &cfg, opts)
}

fn write_best(dir: &Path, step: u64, overall: Option<f64>) -> Result<(), TrainError> {
    let pointer = BestPointer { step, jaccard_overall: overall, checkpoint: format!("ckpt-{step}") };
    let path = dir.join(BEST_FILE);
    let mut text = serde_json::to_string_pretty(&pointer).expect("pointer serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

/// Path of the best checkpoint recorded in a run directory.
pub fn best_checkpoint_dir(run_dir: &Path) -> Result<PathBuf, TrainError> {
    let path = run_dir.join(BEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let pointer: BestPointer =
        serde_json::from_str(&text).map_err(|e| TrainError::Resume(format!("{}: {e}", path.display())))?;
    Ok(run_dir.join(pointer.checkpoint))
}

#[allow(clippy::too_many_arguments)]
fn save_progress(
    out: &Outputs,
    enc: &EncoderConfig,
    cfg: &TrainConfig,
    data: &TrainData<'_>,
    state: &TrainState,
    evals: &[EvalLog],
    best: Option<(u64, f64)>,
    evaluated: bool,
) -> Result<(), TrainError> {
    let dir = checkpoint::checkpoint_dir(&out.dir, state.step);
    Checkpoint {
        config: *enc,
        params: state.params.clone(),
        seed: cfg.seed,
        step: state.step,
        optimizer: Some(state.optimizer.clone()),
        feature_config: Some(data.feature_cfg),
    }
    .save(&dir)?;
    let vocab_path = dir.join(checkpoint::VOCAB_FILE);
    data.vocab.save(&vocab_path).map_err(io_err(&vocab_path))?;
    if evaluated {
        rewrite_jsonl(&out.dir.join(EVAL_LOG), evals)?;
        let plot = out.dir.join(PLOT_CSV);
        eval::write_plot_csv(&plot, evals).map_err(io_err(&plot))?;
    }
    match best {
        Some((step, overall)) => write_best(&out.dir, step, Some(overall)),
        None => write_best(&out.dir, state.step, None),
    }
}

fn resume_into(
    dir: &Path,
    enc: &EncoderConfig,
    cfg: &TrainConfig,
    data: &TrainData<'_>,
    state: &mut TrainState,
    evals: &mut Vec<EvalLog>,
    best: &mut Option<(u64, f64, EncoderParams, JaccardReport)>,
) -> Result<(), TrainError> {
    let Some((step, path)) = checkpoint::list_checkpoints(dir).map_err(io_err(dir))?.pop() else {
        return Err(TrainError::Resume(format!("no checkpoint under {}", dir.display())));
    };
    let ck = Checkpoint::load(&path)?;
    if ck.config.tap_layer != enc.tap_layer || ck.params.num_params() != state.params.num_params() || ck.config != *enc
    {
        return Err(TrainError::Resume(format!("{} was written with a different encoder config", path.display())));
    }
    if ck.seed != cfg.seed {
        return Err(TrainError::Resume(format!("{} was written with seed {}", path.display(), ck.seed)));
    }
    let Some(opt) = ck.optimizer else {
        return Err(TrainError::Resume(format!("{} has no optimizer state", path.display())));
    };
    state.step = step;
    state.params = ck.params;
    state.optimizer = opt;
    let log_path = dir.join(TRAIN_LOG);
    state.log = if log_path.exists() { read_jsonl(&log_path)? } else { Vec::new() };
    state.log.retain(|e: &StepLog| e.step <= step);
    if state.log.len() as u64 != step {
        return Err(TrainError::Resume(format!("{} does not cover steps 1..={step}", log_path.display())));
    }
    let eval_path = dir.join(EVAL_LOG);
    *evals = if eval_path.exists() { read_jsonl(&eval_path)? } else { Vec::new() };
    evals.retain(|e| e.step <= step);
    let mut top: Option<&EvalLog> = None;
    for e in evals.iter() {
        if top.is_none_or(|t| e.jaccard_overall > t.jaccard_overall) {
            top = Some(e);
        }
    }
    if let Some(top) = top {
        let params = Checkpoint::load(&checkpoint::checkpoint_dir(dir, top.step))?.params;
        let report = eval::evaluate(&params, enc, data.validation, data.vocab, &data.feature_cfg, &data.decode_cfg)?;
        *best = Some((top.step, top.jaccard_overall, params, report));
    }
    log::info!("resuming from step {step}");
    Ok(())
}
