//! Instruction-tuning dataset export and the training-configuration manifest
//! an external fine-tuning job consumes.
//!
//! Each epoch re-balances the split with a derived seed (base + epoch index),
//! so epochs see different oversampled minority examples.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{balance_epoch, distribution, DatasetError, DatasetSplit};
use crate::prompts::{render_training_instance, InstructionRecord, PromptStrategy, RenderError};

/// Adapter settings. Rank, alpha, dropout, and target modules are not pinned
/// by the reference configuration and stay null until the trainer chooses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub method: String,
    pub quantization_bits: u8,
    pub rank: Option<u32>,
    pub alpha: Option<f64>,
    pub dropout: Option<f64>,
    pub target_modules: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    pub optimizer: String,
    pub schedule: String,
    pub adapter: AdapterConfig,
    pub seed: u64,
    /// Fields left null are intentionally unpinned, not defaults.
    pub note: String,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown training config preset \"{0}\"")]
    UnknownPreset(String),
    #[error("epochs must be at least 1")]
    ZeroEpochs,
}

/// Per-export bookkeeping returned to the caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportSummary {
    pub records: usize,
    pub epochs: u32,
    pub records_per_epoch: usize,
    pub pos_per_epoch: usize,
    pub neg_per_epoch: usize,
}

/// Writes one JSON object per line: `{"messages": [...], "meta": {...}}`.
///
/// For each epoch `e` in `1..=epochs` the split is re-balanced with seed
/// `seed + e` and every balanced example becomes one training conversation
/// tagged with that epoch index.
pub fn export_sft_dataset(
    split: &DatasetSplit,
    strategy: PromptStrategy,
    epochs: u32,
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<ExportSummary, ExportError> {
    if epochs == 0 {
        return Err(ExportError::ZeroEpochs);
    }
    let path = path.as_ref();
    let io_err = |source| ExportError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);

    let mut records = 0usize;
    let mut per_epoch = (0usize, 0usize, 0usize);
    for epoch in 1..=epochs {
        let balanced = balance_epoch(split, seed + u64::from(epoch))?;
        let dist = distribution(&balanced);
        per_epoch = (balanced.examples.len(), dist.count_pos, dist.count_neg);
        for example in &balanced.examples {
            let mut record = render_training_instance(strategy, example)?;
            record.meta.epoch_index = epoch;
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n").map_err(io_err)?;
            records += 1;
        }
    }
    out.flush().map_err(io_err)?;

    Ok(ExportSummary {
        records,
        epochs,
        records_per_epoch: per_epoch.0,
        pos_per_epoch: per_epoch.1,
        neg_per_epoch: per_epoch.2,
    })
}

/// Reads an exported dataset back, validating every record's invariants.
pub fn load_sft_dataset(path: impl AsRef<Path>) -> Result<Vec<InstructionRecord>, ExportError> {
    let path = path.as_ref();
    let io_err = |source| ExportError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut records = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: InstructionRecord = serde_json::from_str(&line)?;
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

/// The reference fine-tuning configuration: 5 epochs, constant 2e-4 learning
/// rate, decoupled-weight-decay Adam, low-rank adapters over 4-bit weights.
pub fn emit_train_config(preset: &str) -> Result<TrainConfig, ExportError> {
    match preset {
        "paper_default" | "paper-default" => Ok(TrainConfig {
            learning_rate: 2e-4,
            epochs: 5,
            optimizer: "adamw".into(),
            schedule: "constant".into(),
            adapter: AdapterConfig {
                method: "lora".into(),
                quantization_bits: 4,
                rank: None,
                alpha: None,
                dropout: None,
                target_modules: None,
            },
            seed: 42,
            note: "rank/alpha/dropout/target_modules are unreported upstream; set them in the trainer".into(),
        }),
        other => Err(ExportError::UnknownPreset(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Label, LabeledExample};
    use crate::prompts::Role;
    use std::collections::HashMap;

    fn split(pos: usize, neg: usize) -> DatasetSplit {
        let mut examples = Vec::new();
        for i in 0..pos {
            examples.push(LabeledExample::new(
                format!("p{i}"),
                format!("My mom has dementia, note {i}."),
                Label::Pos,
            ));
        }
        for i in 0..neg {
            examples.push(LabeledExample::new(
                format!("n{i}"),
                format!("Dementia news item {i}."),
                Label::Neg,
            ));
        }
        DatasetSplit { name: "training".into(), examples }
    }

    #[test]
    fn one_epoch_of_balanced_split() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sft.jsonl");
        let summary =
            export_sft_dataset(&split(10, 10), PromptStrategy::ZeroShot, 1, 7, &path).unwrap();
        assert_eq!(summary.records, 20);
        let records = load_sft_dataset(&path).unwrap();
        assert_eq!(records.len(), 20);
        assert!(records.iter().all(|r| r.meta.epoch_index == 1));
    }

    #[test]
    fn per_epoch_histograms_are_even() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sft.jsonl");
        export_sft_dataset(&split(13, 5), PromptStrategy::FewShot, 3, 1, &path).unwrap();
        let records = load_sft_dataset(&path).unwrap();
        let mut per_epoch: HashMap<u32, (usize, usize)> = HashMap::new();
        for r in &records {
            let entry = per_epoch.entry(r.meta.epoch_index).or_default();
            match r.meta.gold_label {
                Label::Pos => entry.0 += 1,
                Label::Neg => entry.1 += 1,
            }
        }
        assert_eq!(per_epoch.len(), 3);
        for (pos, neg) in per_epoch.values() {
            assert_eq!(pos, neg);
            assert_eq!(*pos, 13);
        }
    }

    #[test]
    fn epochs_differ_but_export_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        export_sft_dataset(&split(8, 3), PromptStrategy::ZeroShot, 2, 5, &a).unwrap();
        export_sft_dataset(&split(8, 3), PromptStrategy::ZeroShot, 2, 5, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

        let records = load_sft_dataset(&a).unwrap();
        let epoch_ids = |e: u32| -> Vec<&str> {
            records
                .iter()
                .filter(|r| r.meta.epoch_index == e)
                .map(|r| r.meta.tweet_id.as_str())
                .collect()
        };
        assert_ne!(epoch_ids(1), epoch_ids(2));
    }

    #[test]
    fn single_class_split_propagates_unbalanceable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sft.jsonl");
        let err = export_sft_dataset(&split(4, 0), PromptStrategy::ZeroShot, 1, 0, &path)
            .unwrap_err();
        assert!(matches!(err, ExportError::Dataset(DatasetError::Unbalanceable { .. })));
    }

    #[test]
    fn no_gold_label_in_user_turns_for_zero_shot() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sft.jsonl");
        export_sft_dataset(&split(4, 4), PromptStrategy::ZeroShot, 1, 0, &path).unwrap();
        for r in load_sft_dataset(&path).unwrap() {
            let last = r.messages.last().unwrap();
            assert_eq!(last.role, Role::Assistant);
            assert_eq!(last.content, r.meta.gold_label.as_str());
            for m in &r.messages[..r.messages.len() - 1] {
                assert_ne!(m.role, Role::Assistant);
                assert!(!m.content.contains("Label"));
            }
        }
    }

    #[test]
    fn paper_default_constants() {
        let cfg = emit_train_config("paper_default").unwrap();
        assert_eq!(cfg.learning_rate, 2e-4);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.optimizer, "adamw");
        assert_eq!(cfg.schedule, "constant");
        assert_eq!(cfg.adapter.method, "lora");
        assert_eq!(cfg.adapter.quantization_bits, 4);
        assert_eq!(cfg.adapter.rank, None);
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(matches!(emit_train_config("fast"), Err(ExportError::UnknownPreset(_))));
    }
}
