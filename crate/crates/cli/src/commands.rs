use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use xlqa_core::augment::{build_groups, group_records, PlanFile};
use xlqa_core::checkpoint::{self, Checkpoint};
use xlqa_core::corpus::{self, DatasetFormat};
use xlqa_core::eval;
use xlqa_core::tokenizer::build_vocab;
use xlqa_core::trainer::{self, pretrain_qa_head, RunOptions, TrainData, BEST_FILE, EVAL_LOG, TRAIN_LOG};
use xlqa_core::{DecodeConfig, QaRecord, Vocab};

use crate::config::RunConfig;
use crate::error::CliError;

fn input_err(what: impl Display) -> impl FnOnce(Box<dyn Display>) -> CliError {
    move |e| CliError::usage(format!("{what}: {e}"))
}

fn boxed<E: Display + 'static>(e: E) -> Box<dyn Display> {
    Box::new(e)
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{} does not exist", path.display())))
    }
}

fn load_records(path: &Path) -> Result<Vec<QaRecord>, CliError> {
    require(path)?;
    let format = DatasetFormat::from_path(path)
        .ok_or_else(|| CliError::usage(format!("{}: expected a .jsonl or .csv file", path.display())))?;
    Ok(corpus::load_dataset(path, format)?)
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

pub fn split(input: &Path, test_size: usize, val_size: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let records = load_records(input)?;
    let split = corpus::stratified_split(&records, test_size, val_size, seed)?;
    split
        .write(out, test_size, val_size)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", out.display())))?;
    print_json(&json!({
        "train": split.train.len(),
        "validation": split.validation.len(),
        "test": split.test.len(),
        "out": out,
    }));
    Ok(())
}

pub fn augment(input: &Path, plan: &Path, adapters: &Path, out: &Path) -> Result<(), CliError> {
    let records = load_records(input)?;
    require(plan)?;
    require(adapters)?;
    let plans = PlanFile::load(plan)?.resolve(adapters)?;
    let (groups, report) = build_groups(&records, &plans)?;
    fs::create_dir_all(out).map_err(|e| CliError::usage(format!("cannot create {}: {e}", out.display())))?;
    let augmented: Vec<QaRecord> = groups.iter().flat_map(|g| g.members().cloned()).collect();
    corpus::write_jsonl(&out.join("augmented.jsonl"), &augmented)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", out.display())))?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_text(&out.join("augment_report.json"), &text)?;
    let totals = report.totals();
    print_json(&json!({
        "records": augmented.len(),
        "attempted": totals.attempted,
        "succeeded": totals.succeeded,
        "dropped": totals.dropped,
    }));
    Ok(())
}

/// A `ckpt-<step>` directory, or the best checkpoint of a run directory.
fn checkpoint_path(path: &Path) -> Result<PathBuf, CliError> {
    require(path)?;
    if path.join(BEST_FILE).exists() {
        Ok(trainer::best_checkpoint_dir(path)?)
    } else {
        Ok(path.to_path_buf())
    }
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, Vocab, PathBuf), CliError> {
    let dir = checkpoint_path(path)?;
    let ck = Checkpoint::load(&dir).map_err(boxed).map_err(input_err(dir.display()))?;
    let vocab_path = dir.join(checkpoint::VOCAB_FILE);
    let vocab = Vocab::load(&vocab_path).map_err(boxed).map_err(input_err(vocab_path.display()))?;
    Ok((ck, vocab, dir))
}

pub fn train(config: Option<&Path>, overrides: &[String], resume: bool, pretrain: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, overrides)?;
    cfg.check_paths()?;
    let (train_path, out_dir) = (cfg.train.clone().unwrap(), cfg.out_dir.clone().unwrap());
    let train_set = load_records(&train_path)?;
    let validation = match &cfg.validation {
        Some(p) => load_records(p)?,
        None => Vec::new(),
    };

    let (vocab, mut encoder, init) = match &cfg.init_checkpoint {
        Some(path) => {
            let (ck, vocab, dir) = load_checkpoint(path)?;
            log::info!("starting from {}", dir.display());
            (vocab, ck.config, Some(ck.params))
        }
        None => {
            let vocab = match &cfg.vocab {
                Some(p) => Vocab::load(p).map_err(boxed).map_err(input_err(p.display()))?,
                None => {
                    let text: Vec<&str> =
                        train_set.iter().flat_map(|r| [r.context.as_str(), r.question.as_str()]).collect();
                    build_vocab(&text, cfg.vocab_size).map_err(boxed).map_err(input_err("vocabulary"))?
                }
            };
            let encoder = xlqa_core::EncoderConfig { vocab_size: vocab.len(), ..cfg.encoder };
            (vocab, encoder, None)
        }
    };
    encoder.tap_layer = cfg.training.tap_layer;
    if cfg.features.max_length > encoder.max_positions {
        return Err(CliError::usage(format!(
            "max_length {} exceeds max_positions {}",
            cfg.features.max_length, encoder.max_positions
        )));
    }

    let data = TrainData {
        train: &train_set,
        validation: &validation,
        vocab: &vocab,
        feature_cfg: cfg.features,
        decode_cfg: cfg.decode,
    };
    let opts = RunOptions { init, out_dir: Some(out_dir.clone()), resume, stop_after: None };
    let outcome = if pretrain {
        pretrain_qa_head(&data, &encoder, &cfg.training, opts)?
    } else {
        trainer::train(&data, &group_records(&train_set), &encoder, &cfg.training, opts)?
    };
    print_json(&json!({
        "steps": outcome.state.step,
        "best_step": outcome.best.step,
        "best_jaccard": outcome.best_report.as_ref().map(|r| r.overall),
        "checkpoint": checkpoint::checkpoint_dir(&out_dir, outcome.best.step),
    }));
    Ok(())
}

pub fn evaluate(
    checkpoint: &Path,
    input: &Path,
    out: &Path,
    per_record: bool,
    decode: DecodeConfig,
) -> Result<(), CliError> {
    let (ck, vocab, _) = load_checkpoint(checkpoint)?;
    let records = load_records(input)?;
    let features = ck.feature_config.unwrap_or_default();
    let report = eval::evaluate(&ck.params, &ck.config, &records, &vocab, &features, &decode)
        .map_err(boxed)
        .map_err(input_err(input.display()))?;
    report.write_json(out).map_err(|e| CliError::usage(format!("cannot write {}: {e}", out.display())))?;
    if per_record {
        let csv = out.with_extension("records.csv");
        report.write_record_csv(&csv).map_err(|e| CliError::usage(format!("cannot write {}: {e}", csv.display())))?;
    }
    print_json(&json!({ "overall": report.overall, "per_language": report.per_language }));
    Ok(())
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn count_lines(path: &Path) -> usize {
    fs::read_to_string(path).map(|t| t.lines().count()).unwrap_or(0)
}

pub fn inspect(path: &Path) -> Result<(), CliError> {
    require(path)?;
    let summary = if path.is_file() {
        let records = load_records(path)?;
        let mut languages: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &records {
            *languages.entry(&r.language).or_default() += 1;
        }
        json!({ "kind": "dataset", "records": records.len(), "languages": languages })
    } else if path.join(checkpoint::PARAMS_BLOB).exists() {
        let (ck, vocab, _) = load_checkpoint(path)?;
        json!({
            "kind": "checkpoint",
            "step": ck.step,
            "seed": ck.seed,
            "parameters": ck.params.num_params(),
            "vocab_size": vocab.len(),
            "encoder": ck.config,
            "features": ck.feature_config,
            "optimizer_state": ck.optimizer.is_some(),
        })
    } else if path.join(BEST_FILE).exists() {
        let checkpoints: Vec<u64> = checkpoint::list_checkpoints(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        json!({
            "kind": "run",
            "best": read_json(&path.join(BEST_FILE))?,
            "steps_logged": count_lines(&path.join(TRAIN_LOG)),
            "evaluations": count_lines(&path.join(EVAL_LOG)),
            "checkpoints": checkpoints,
        })
    } else if path.join("manifest.json").exists() {
        let mut m = read_json(&path.join("manifest.json"))?;
        m["kind"] = json!("split");
        m
    } else {
        return Err(CliError::usage(format!(
            "{} is not a dataset, checkpoint, run or split directory",
            path.display()
        )));
    };
    print_json(&summary);
    Ok(())
}
