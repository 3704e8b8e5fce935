//! Labeled tweet corpus: loading, validation, and per-epoch class balancing.
//!
//! Tweets are kept verbatim. No hashtag splitting, stop-word removal, or
//! stemming happens anywhere in this module.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary class: 1 = the author has a family member with dementia.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Neg => 0,
            Label::Pos => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Neg => "0",
            Label::Pos => "1",
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Label::Neg),
            1 => Ok(Label::Pos),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_u8()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tweet with its gold label. Text is stored raw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        Self { id: id.into(), text: text.into(), label }
    }
}

/// An ordered, id-unique collection of labeled examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: String,
    pub examples: Vec<LabeledExample>,
}

/// Label tallies for one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClassDistribution {
    pub count_pos: usize,
    pub count_neg: usize,
    pub total: usize,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing required column \"{0}\" in header")]
    MissingColumn(&'static str),
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("malformed delimited input: {0}")]
    Malformed(#[from] csv::Error),
    #[error("cannot balance split \"{split}\": class {label} has no examples")]
    Unbalanceable { split: String, label: Label },
}

/// Column layout and delimiter of the input file. Tab-separated by default.
#[derive(Debug, Clone, Copy)]
pub struct InputFormat {
    pub delimiter: u8,
}

impl Default for InputFormat {
    fn default() -> Self {
        Self { delimiter: b'\t' }
    }
}

/// Reads a delimited file with an `id`, `text`, `label` header into a split.
/// Row order is preserved; rows are validated as they are read.
pub fn load_split(
    path: impl AsRef<Path>,
    name: impl Into<String>,
    format: InputFormat,
) -> Result<DatasetSplit, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .flexible(false)
        .from_reader(file);

    let headers = reader.headers()?.clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or(DatasetError::MissingColumn(name))
    };
    let id_col = col("id")?;
    let text_col = col("text")?;
    let label_col = col("label")?;

    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1; // 1-based data row, header excluded
        let record = record?;
        let id = record.get(id_col).unwrap_or("").to_string();
        let text = record.get(text_col).unwrap_or("").to_string();
        let raw_label = record.get(label_col).unwrap_or("").trim();

        if text.trim().is_empty() {
            return Err(DatasetError::InvalidRow {
                row,
                message: "text is empty".into(),
            });
        }
        let label = match raw_label {
            "0" => Label::Neg,
            "1" => Label::Pos,
            other => {
                return Err(DatasetError::InvalidRow {
                    row,
                    message: format!("label must be 0 or 1, got \"{other}\""),
                })
            }
        };
        if !seen.insert(id.clone()) {
            return Err(DatasetError::InvalidRow {
                row,
                message: format!("duplicate id \"{id}\""),
            });
        }
        examples.push(LabeledExample { id, text, label });
    }

    Ok(DatasetSplit { name: name.into(), examples })
}

/// Exact label tallies.
pub fn distribution(split: &DatasetSplit) -> ClassDistribution {
    let count_pos = split.examples.iter().filter(|e| e.label == Label::Pos).count();
    let count_neg = split.examples.len() - count_pos;
    ClassDistribution { count_pos, count_neg, total: split.examples.len() }
}

/// Oversamples the minority class to exact balance and reshuffles.
///
/// Minority examples are replicated `floor(majority/minority)` times, then a
/// seeded without-replacement sample of minority examples tops the count up to
/// exact equality. Majority examples appear exactly once. The whole result is
/// shuffled with the same seeded generator, so the output is a pure function
/// of `(split, seed)`.
pub fn balance_epoch(split: &DatasetSplit, seed: u64) -> Result<DatasetSplit, DatasetError> {
    let dist = distribution(split);
    if dist.count_pos == 0 || dist.count_neg == 0 {
        let label = if dist.count_pos == 0 { Label::Pos } else { Label::Neg };
        return Err(DatasetError::Unbalanceable { split: split.name.clone(), label });
    }

    let minority_label = if dist.count_pos < dist.count_neg { Label::Pos } else { Label::Neg };
    let minority: Vec<&LabeledExample> =
        split.examples.iter().filter(|e| e.label == minority_label).collect();
    let majority: Vec<&LabeledExample> =
        split.examples.iter().filter(|e| e.label != minority_label).collect();

    let factor = majority.len() / minority.len();
    let top_up = majority.len() - factor * minority.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<LabeledExample> = Vec::with_capacity(2 * majority.len());
    out.extend(majority.iter().map(|e| (*e).clone()));
    for _ in 0..factor {
        out.extend(minority.iter().map(|e| (*e).clone()));
    }
    let mut extra_idx = rand::seq::index::sample(&mut rng, minority.len(), top_up).into_vec();
    extra_idx.sort_unstable();
    out.extend(extra_idx.into_iter().map(|i| minority[i].clone()));

    out.shuffle(&mut rng);

    Ok(DatasetSplit { name: split.name.clone(), examples: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tsv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn synthetic_split(pos: usize, neg: usize) -> DatasetSplit {
        let mut examples = Vec::new();
        for i in 0..pos {
            examples.push(LabeledExample::new(format!("p{i}"), format!("pos tweet {i}"), Label::Pos));
        }
        for i in 0..neg {
            examples.push(LabeledExample::new(format!("n{i}"), format!("neg tweet {i}"), Label::Neg));
        }
        DatasetSplit { name: "training".into(), examples }
    }

    #[test]
    fn load_valid_rows_in_order() {
        let f = write_tsv("id\ttext\tlabel\na\tMy mom has dementia\t1\nb\tNews about dementia\t0\n");
        let split = load_split(f.path(), "test", InputFormat::default()).unwrap();
        assert_eq!(split.examples.len(), 2);
        assert_eq!(split.examples[0].id, "a");
        assert_eq!(split.examples[0].label, Label::Pos);
        assert_eq!(split.examples[1].label, Label::Neg);
    }

    #[test]
    fn load_rejects_out_of_range_label() {
        let f = write_tsv("id\ttext\tlabel\na\tok tweet\t1\nb\tbad tweet\t2\n");
        let err = load_split(f.path(), "test", InputFormat::default()).unwrap_err();
        match err {
            DatasetError::InvalidRow { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains('2'));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn load_rejects_missing_label_column() {
        let f = write_tsv("id\ttext\na\tok tweet\n");
        let err = load_split(f.path(), "test", InputFormat::default()).unwrap_err();
        match err {
            DatasetError::MissingColumn(col) => assert_eq!(col, "label"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn load_rejects_empty_text() {
        let f = write_tsv("id\ttext\tlabel\na\t \t1\n");
        let err = load_split(f.path(), "test", InputFormat::default()).unwrap_err();
        assert!(matches!(err, DatasetError::InvalidRow { row: 1, .. }));
    }

    #[test]
    fn load_supports_comma_delimiter() {
        let f = write_tsv("id,text,label\na,plain tweet,0\n");
        let split = load_split(f.path(), "test", InputFormat { delimiter: b',' }).unwrap();
        assert_eq!(split.examples[0].label, Label::Neg);
    }

    #[test]
    fn distribution_counts_exactly() {
        let split = synthetic_split(3, 2);
        let d = distribution(&split);
        assert_eq!((d.count_pos, d.count_neg, d.total), (3, 2, 5));
    }

    #[test]
    fn distribution_of_empty_split_is_zero() {
        let split = DatasetSplit { name: "empty".into(), examples: vec![] };
        let d = distribution(&split);
        assert_eq!((d.count_pos, d.count_neg, d.total), (0, 0, 0));
    }

    #[test]
    fn balance_matches_table_shape() {
        // same shape as the task's training split: 4523 pos / 2201 neg
        let split = synthetic_split(4523, 2201);
        let balanced = balance_epoch(&split, 7).unwrap();
        let d = distribution(&balanced);
        assert_eq!((d.count_pos, d.count_neg), (4523, 4523));
        // 2201 * 2 = 4402 from replication, 121 topped up
        assert_eq!(d.total, 9046);
    }

    #[test]
    fn balance_keeps_majority_once_and_minority_at_least_once() {
        let split = synthetic_split(9, 4);
        let balanced = balance_epoch(&split, 1).unwrap();
        for e in &split.examples {
            let n = balanced.examples.iter().filter(|b| b.id == e.id).count();
            if e.label == Label::Pos {
                assert_eq!(n, 1, "majority example {} must appear exactly once", e.id);
            } else {
                assert!(n >= 2, "minority example {} must be replicated", e.id);
            }
        }
        let ids: HashSet<&str> = split.examples.iter().map(|e| e.id.as_str()).collect();
        assert!(balanced.examples.iter().all(|b| ids.contains(b.id.as_str())));
    }

    #[test]
    fn balance_already_balanced_reshuffles_same_multiset() {
        let split = synthetic_split(10, 10);
        let balanced = balance_epoch(&split, 3).unwrap();
        assert_eq!(balanced.examples.len(), 20);
        let mut a: Vec<&str> = split.examples.iter().map(|e| e.id.as_str()).collect();
        let mut b: Vec<&str> = balanced.examples.iter().map(|e| e.id.as_str()).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn balance_is_deterministic_per_seed() {
        let split = synthetic_split(17, 5);
        assert_eq!(balance_epoch(&split, 42).unwrap(), balance_epoch(&split, 42).unwrap());
        assert_ne!(balance_epoch(&split, 42).unwrap(), balance_epoch(&split, 43).unwrap());
    }

    #[test]
    fn balance_errors_on_single_class() {
        let split = synthetic_split(5, 0);
        assert!(matches!(
            balance_epoch(&split, 0),
            Err(DatasetError::Unbalanceable { label: Label::Neg, .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn balanced_output_is_exactly_even(pos in 1usize..60, neg in 1usize..60, seed in 0u64..1000) {
            let split = synthetic_split(pos, neg);
            let balanced = balance_epoch(&split, seed).unwrap();
            let d = distribution(&balanced);
            proptest::prop_assert_eq!(d.count_pos, d.count_neg);
            proptest::prop_assert_eq!(d.total, 2 * pos.max(neg));
            // every input example appears at least once
            for e in &split.examples {
                proptest::prop_assert!(balanced.examples.iter().any(|b| b.id == e.id));
            }
            // nothing foreign appears
            let ids: HashSet<&str> = split.examples.iter().map(|e| e.id.as_str()).collect();
            proptest::prop_assert!(balanced.examples.iter().all(|b| ids.contains(b.id.as_str())));
        }
    }
}
