//! Batch experiment runner: apply one strategy to one split, collect
//! predictions, persist a reloadable run record.
//!
//! A run directory holds `manifest.json` plus `predictions.jsonl` (one JSON
//! object per line). Re-running against an existing directory skips ids that
//! already have a prediction, so a crashed run resumes where it stopped.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, Decoding};
use crate::cascade::{run_cascade, CascadeError, CascadeOptions};
use crate::dataset::{DatasetSplit, Label};
use crate::parsing::extract_binary_label;
use crate::prompts::{format_transcript, render, PromptStrategy, RenderError};

/// One model decision for one tweet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub tweet_id: String,
    pub gold: Label,
    /// Absent when parsing failed under the error_out policy; such
    /// predictions are excluded from metrics and reported as coverage loss.
    pub predicted: Option<Label>,
    pub raw_completion: String,
    pub parse_error: Option<String>,
    pub strategy: PromptStrategy,
    pub latency_ms: u64,
    pub fallback_applied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub strategy: PromptStrategy,
    pub model_name: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub status: RunStatus,
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
}

/// What to do when a completion does not parse to a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackPolicy {
    /// Keep the prediction unscored; audits only.
    ErrorOut,
    /// Assign a fixed class and set the fallback flag.
    DefaultTo(Label),
}

impl Default for FallbackPolicy {
    fn default() -> Self {
        // what an argmax classifier would do on this imbalanced task
        FallbackPolicy::DefaultTo(Label::Pos)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub fallback: FallbackPolicy,
    pub seed: u64,
    pub cascade: CascadeOptions,
    pub max_parallel: usize,
    /// When set, the run is persisted here and prior predictions are reused.
    pub run_dir: Option<PathBuf>,
    pub config_snapshot: serde_json::Value,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            fallback: FallbackPolicy::default(),
            seed: 0,
            cascade: CascadeOptions::default(),
            max_parallel: 1,
            run_dir: None,
            config_snapshot: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("split is empty")]
    EmptySplit,
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("backend failure aborted the run after {completed} prediction(s): {reason}")]
    Aborted { completed: usize, reason: String },
    #[error("run persistence failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("run record is malformed: {0}")]
    Json(#[from] serde_json::Error),
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// Applies one strategy to every example of a split.
///
/// Examples run concurrently up to `max_parallel`; the record keeps split
/// order. Parse failures follow the fallback policy; backend failures abort
/// the run with partial results persisted and the manifest marked incomplete.
pub fn run_experiment(
    backend: &dyn ChatBackend,
    strategy: PromptStrategy,
    split: &DatasetSplit,
    options: &RunOptions,
) -> Result<RunRecord, InferenceError> {
    if split.examples.is_empty() {
        return Err(InferenceError::EmptySplit);
    }

    let prior: HashMap<String, Prediction> = match &options.run_dir {
        Some(dir) if dir.join("predictions.jsonl").exists() => load_predictions(dir)?
            .into_iter()
            .map(|p| (p.tweet_id.clone(), p))
            .collect(),
        _ => HashMap::new(),
    };

    let started_at = now_rfc3339();
    let decoding = Decoding::for_strategy(strategy);

    let slots: Vec<Mutex<Option<Result<Prediction, String>>>> =
        split.examples.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);

    std::thread::scope(|scope| {
        for _ in 0..options.max_parallel.max(1) {
            scope.spawn(|| loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= split.examples.len() {
                    break;
                }
                let example = &split.examples[i];
                let outcome = if let Some(p) = prior.get(&example.id) {
                    Ok(p.clone())
                } else {
                    predict_one(backend, strategy, example, &decoding, options)
                };
                if outcome.is_err() {
                    abort.store(true, Ordering::Relaxed);
                }
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let mut predictions = Vec::with_capacity(split.examples.len());
    let mut abort_reason = None;
    for slot in slots {
        match slot.into_inner().unwrap() {
            Some(Ok(p)) => predictions.push(p),
            Some(Err(reason)) => {
                abort_reason.get_or_insert(reason);
            }
            None => {}
        }
    }

    let status = if abort_reason.is_none() && predictions.len() == split.examples.len() {
        RunStatus::Complete
    } else {
        RunStatus::Incomplete
    };

    let record = RunRecord {
        run_id: uuid::Uuid::new_v4().to_string(),
        strategy,
        model_name: backend.model_name().to_string(),
        config: options.config_snapshot.clone(),
        seed: options.seed,
        started_at,
        finished_at: now_rfc3339(),
        status,
        predictions,
    };

    if let Some(dir) = &options.run_dir {
        save_run(&record, dir)?;
    }

    match abort_reason {
        Some(reason) => Err(InferenceError::Aborted { completed: record.predictions.len(), reason }),
        None => Ok(record),
    }
}

fn predict_one(
    backend: &dyn ChatBackend,
    strategy: PromptStrategy,
    example: &crate::dataset::LabeledExample,
    decoding: &Decoding,
    options: &RunOptions,
) -> Result<Prediction, String> {
    let start = Instant::now();
    let (raw_completion, parsed) = match strategy {
        PromptStrategy::Cascade => match run_cascade(backend, example, options.cascade) {
            Ok(session) => {
                let label = session.final_label.expect("terminal session has a label");
                (format_transcript(&session.transcript), Ok(label))
            }
            Err(CascadeError::UnparseableStep { step, completion }) => (
                completion.clone(),
                Err(format!("step {step}: unparseable yes/no: {completion:?}")),
            ),
            Err(CascadeError::Backend(e)) => return Err(backend_reason(e)),
            Err(CascadeError::Render(e)) => return Err(e.to_string()),
        },
        _ => {
            let prompt = render(strategy, example).map_err(|e| e.to_string())?;
            let response = match backend.complete(&prompt.messages, decoding) {
                Ok(r) => r,
                Err(e) => return Err(backend_reason(e)),
            };
            let parsed = extract_binary_label(&response.content)
                .map(|p| p.label)
                .map_err(|e| e.to_string());
            (response.content, parsed)
        }
    };

    let latency_ms = start.elapsed().as_millis() as u64;
    let prediction = match parsed {
        Ok(label) => Prediction {
            tweet_id: example.id.clone(),
            gold: example.label,
            predicted: Some(label),
            raw_completion,
            parse_error: None,
            strategy,
            latency_ms,
            fallback_applied: false,
        },
        Err(parse_error) => {
            let (predicted, fallback_applied) = match options.fallback {
                FallbackPolicy::ErrorOut => (None, false),
                FallbackPolicy::DefaultTo(label) => (Some(label), true),
            };
            Prediction {
                tweet_id: example.id.clone(),
                gold: example.label,
                predicted,
                raw_completion,
                parse_error: Some(parse_error),
                strategy,
                latency_ms,
                fallback_applied,
            }
        }
    };
    Ok(prediction)
}

fn backend_reason(e: BackendError) -> String {
    e.to_string()
}

pub fn save_run(record: &RunRecord, dir: impl AsRef<Path>) -> Result<(), InferenceError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let manifest = serde_json::to_string_pretty(record)?;
    std::fs::write(dir.join("manifest.json"), manifest)?;

    let mut file = std::io::BufWriter::new(std::fs::File::create(dir.join("predictions.jsonl"))?);
    for p in &record.predictions {
        serde_json::to_writer(&mut file, p)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

pub fn load_predictions(dir: impl AsRef<Path>) -> Result<Vec<Prediction>, InferenceError> {
    let file = std::fs::File::open(dir.as_ref().join("predictions.jsonl"))?;
    let mut predictions = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        predictions.push(serde_json::from_str(&line)?);
    }
    Ok(predictions)
}

pub fn load_run(dir: impl AsRef<Path>) -> Result<RunRecord, InferenceError> {
    let dir = dir.as_ref();
    let manifest = std::fs::read_to_string(dir.join("manifest.json"))?;
    let mut record: RunRecord = serde_json::from_str(&manifest)?;
    record.predictions = load_predictions(dir)?;
    Ok(record)
}
