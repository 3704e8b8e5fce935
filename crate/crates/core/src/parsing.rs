//! Extracts structured answers from free-form model completions.
//!
//! Unparseable completions surface as errors; fallback policy belongs to the
//! experiment runner, never to the parser.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::dataset::Label;

/// Which extraction rule produced a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    /// The trimmed completion is exactly "0" or "1".
    Exact,
    /// A "Label: <digit>" line; the last occurrence wins.
    LabelPrefix,
    /// First standalone 0/1 token not embedded in a word or longer number.
    StandaloneDigit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLabel {
    pub label: Label,
    /// Byte range of the digit within the completion.
    pub source_span: Range<usize>,
    pub rule_used: LabelRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YesNo {
    Yes,
    No,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("no binary label found in completion: {0:?}")]
    UnparseableLabel(String),
    #[error("no yes/no answer found in completion: {0:?}")]
    UnparseableAnswer(String),
}

fn label_prefix_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // "Label" followed by a separator and a bare 0/1
    RE.get_or_init(|| Regex::new(r"(?i)label\s*[:=-]\s*([01])([^\w.]|$)").unwrap())
}

/// Finds the first 0/1 that is neither part of a word nor of a longer number.
/// A dot counts as number-glue only when a digit sits on its far side, so
/// "1.5" is embedded but a sentence-final "1." is not.
fn first_standalone_digit(completion: &str) -> Option<Range<usize>> {
    let chars: Vec<(usize, char)> = completion.char_indices().collect();
    'outer: for (k, &(idx, c)) in chars.iter().enumerate() {
        if c != '0' && c != '1' {
            continue;
        }
        for (neighbor, beyond) in [
            (k.checked_sub(1), k.checked_sub(2)),
            (Some(k + 1), Some(k + 2)),
        ] {
            let Some(&(_, n)) = neighbor.and_then(|j| chars.get(j)) else { continue };
            if n.is_alphanumeric() || n == '_' {
                continue 'outer;
            }
            if n == '.' {
                if let Some(&(_, b)) = beyond.and_then(|j| chars.get(j)) {
                    if b.is_ascii_digit() {
                        continue 'outer;
                    }
                }
            }
        }
        return Some(idx..idx + 1);
    }
    None
}

fn digit_label(s: &str) -> Label {
    if s == "1" {
        Label::Pos
    } else {
        Label::Neg
    }
}

/// Extracts a binary label, applying rules in priority order: exact match,
/// then last "Label:"-style line, then first standalone 0/1 token.
pub fn extract_binary_label(completion: &str) -> Result<ParsedLabel, ParseError> {
    let trimmed = completion.trim();
    if trimmed == "0" || trimmed == "1" {
        let start = completion.find(trimmed).unwrap();
        return Ok(ParsedLabel {
            label: digit_label(trimmed),
            source_span: start..start + 1,
            rule_used: LabelRule::Exact,
        });
    }

    if let Some(caps) = label_prefix_re().captures_iter(completion).last() {
        let digit = caps.get(1).unwrap();
        return Ok(ParsedLabel {
            label: digit_label(digit.as_str()),
            source_span: digit.range(),
            rule_used: LabelRule::LabelPrefix,
        });
    }

    if let Some(span) = first_standalone_digit(completion) {
        return Ok(ParsedLabel {
            label: digit_label(&completion[span.clone()]),
            source_span: span,
            rule_used: LabelRule::StandaloneDigit,
        });
    }

    Err(ParseError::UnparseableLabel(completion.to_string()))
}

/// Extracts a standalone yes/no token, case-insensitive, first occurrence.
pub fn extract_yes_no(completion: &str) -> Result<YesNo, ParseError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());
    match re.captures(completion) {
        Some(caps) => {
            if caps.get(1).unwrap().as_str().eq_ignore_ascii_case("yes") {
                Ok(YesNo::Yes)
            } else {
                Ok(YesNo::No)
            }
        }
        None => Err(ParseError::UnparseableAnswer(completion.to_string())),
    }
}
