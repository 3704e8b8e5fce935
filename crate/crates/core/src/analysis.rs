//! Error-analysis reporting: enumerate false positives and false negatives
//! from a run and surface keyword co-occurrence signals over a configurable
//! family-term / condition-term lexicon.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetSplit, Label};
use crate::inference::{RunRecord, RunStatus};

/// Keyword lists used for co-occurrence statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lexicon {
    pub family_terms: Vec<String>,
    pub condition_terms: Vec<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self {
            family_terms: [
                "family", "mom", "mother", "dad", "father", "grandma", "grandpa", "grandmother",
                "grandfather", "grandparent", "parent", "sister", "brother", "sibling", "wife",
                "husband",
            ]
            .map(String::from)
            .to_vec(),
            condition_terms: vec!["dementia".into(), "alzheimer".into()],
        }
    }
}

/// One misclassified tweet.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorCase {
    pub tweet_id: String,
    pub text: String,
    pub raw_completion: String,
}

/// Keyword hit counts within one error class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KeywordStats {
    pub family_present: usize,
    pub condition_present: usize,
    pub both_present: usize,
    /// Hits per individual lexicon term.
    pub per_term: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub false_positives: Vec<ErrorCase>,
    pub false_negatives: Vec<ErrorCase>,
    pub fp_keywords: KeywordStats,
    pub fn_keywords: KeywordStats,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("run {0} is incomplete; finish or resume it before analysis")]
    IncompleteRun(String),
    #[error("prediction for tweet id {0} has no matching example in the split")]
    UnknownTweetId(String),
}

fn tally(stats: &mut KeywordStats, text: &str, lexicon: &Lexicon) {
    let lower = text.to_lowercase();
    let mut family = false;
    let mut condition = false;
    for term in &lexicon.family_terms {
        if lower.contains(term.as_str()) {
            family = true;
            *stats.per_term.entry(term.clone()).or_default() += 1;
        }
    }
    for term in &lexicon.condition_terms {
        if lower.contains(term.as_str()) {
            condition = true;
            *stats.per_term.entry(term.clone()).or_default() += 1;
        }
    }
    stats.family_present += family as usize;
    stats.condition_present += condition as usize;
    stats.both_present += (family && condition) as usize;
}

/// Partitions a completed run's misclassifications and computes keyword hit
/// statistics over the tweets' raw text.
pub fn build_error_report(
    run: &RunRecord,
    split: &DatasetSplit,
    lexicon: &Lexicon,
) -> Result<ErrorReport, AnalysisError> {
    if run.status != RunStatus::Complete {
        return Err(AnalysisError::IncompleteRun(run.run_id.clone()));
    }
    let text_by_id: BTreeMap<&str, &str> = split
        .examples
        .iter()
        .map(|e| (e.id.as_str(), e.text.as_str()))
        .collect();

    let mut report = ErrorReport {
        false_positives: Vec::new(),
        false_negatives: Vec::new(),
        fp_keywords: KeywordStats::default(),
        fn_keywords: KeywordStats::default(),
    };

    for p in &run.predictions {
        let Some(predicted) = p.predicted else { continue };
        if predicted == p.gold {
            continue;
        }
        let text = *text_by_id
            .get(p.tweet_id.as_str())
            .ok_or_else(|| AnalysisError::UnknownTweetId(p.tweet_id.clone()))?;
        let case = ErrorCase {
            tweet_id: p.tweet_id.clone(),
            text: text.to_string(),
            raw_completion: p.raw_completion.clone(),
        };
        match predicted {
            Label::Pos => {
                tally(&mut report.fp_keywords, text, lexicon);
                report.false_positives.push(case);
            }
            Label::Neg => {
                tally(&mut report.fn_keywords, text, lexicon);
                report.false_negatives.push(case);
            }
        }
    }
    Ok(report)
}

impl ErrorReport {
    pub fn digest(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "false positives: {}\nfalse negatives: {}\n",
            self.false_positives.len(),
            self.false_negatives.len()
        ));
        for (name, cases, stats) in [
            ("FP", &self.false_positives, &self.fp_keywords),
            ("FN", &self.false_negatives, &self.fn_keywords),
        ] {
            out.push_str(&format!(
                "\n[{name}] family-term {} / condition-term {} / both {}\n",
                stats.family_present, stats.condition_present, stats.both_present
            ));
            for case in cases {
                out.push_str(&format!("  {}: {}\n", case.tweet_id, case.text));
            }
        }
        out
    }
}
