//! Renders the four prompting strategies into role-tagged chat conversations,
//! and renders SFT training instances with the gold label filled in.
//!
//! Templates live as text assets with placeholder markers rather than string
//! concatenation, so golden tests can pin them byte for byte.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Label, LabeledExample};

pub const INPUT_PLACEHOLDER: &str = "<Input Text>";
pub const LABEL_PLACEHOLDER: &str = "<Label>";
pub const STEP1_PLACEHOLDER: &str = "<Step 1 Answer>";
pub const STEP2_PLACEHOLDER: &str = "<Step 2 Answer>";

/// Condition keywords used when completing cascade training dialogues for
/// negative examples.
pub const CONDITION_TERMS: [&str; 2] = ["dementia", "alzheimer"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

/// The four prompting strategies compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    ZeroShot,
    FewShot,
    ChainOfThought,
    Cascade,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 4] = [
        PromptStrategy::ZeroShot,
        PromptStrategy::FewShot,
        PromptStrategy::ChainOfThought,
        PromptStrategy::Cascade,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptStrategy::ZeroShot => "zero_shot",
            PromptStrategy::FewShot => "few_shot",
            PromptStrategy::ChainOfThought => "chain_of_thought",
            PromptStrategy::Cascade => "cascade",
        }
    }
}

impl std::str::FromStr for PromptStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "zero_shot" => Ok(PromptStrategy::ZeroShot),
            "few_shot" => Ok(PromptStrategy::FewShot),
            "chain_of_thought" | "cot" => Ok(PromptStrategy::ChainOfThought),
            "cascade" => Ok(PromptStrategy::Cascade),
            other => Err(format!("unknown strategy \"{other}\"")),
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An inference-time conversation for one tweet under one strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub strategy: PromptStrategy,
    pub messages: Vec<ChatMessage>,
    pub tweet_id: String,
}

/// A built-in labeled exemplar embedded in the few-shot template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotExemplar {
    pub tweet: &'static str,
    pub label: Label,
}

/// The three exemplars baked into the few-shot template, labels (1, 0, 0).
pub fn builtin_exemplars() -> [FewShotExemplar; 3] {
    [
        FewShotExemplar {
            tweet: "My mom has dementia and doesn't recognize me sometimes.",
            label: Label::Pos,
        },
        FewShotExemplar {
            tweet: "Dementia is such a cruel disease. Watching the news about it is heartbreaking.",
            label: Label::Neg,
        },
        FewShotExemplar {
            tweet: "My friend’s grandmother has Alzheimer’s; it’s so sad to see.",
            label: Label::Neg,
        },
    ]
}

/// One SFT training conversation: rendered prompt plus gold assistant turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub messages: Vec<ChatMessage>,
    pub meta: InstructionMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionMeta {
    pub tweet_id: String,
    pub strategy: PromptStrategy,
    pub gold_label: Label,
    pub epoch_index: u32,
}

impl InstructionRecord {
    /// Checks the structural invariants: non-empty conversation, final turn
    /// is an assistant turn, and its content matches the gold label.
    pub fn validate(&self) -> Result<(), RenderError> {
        let last = self
            .messages
            .last()
            .ok_or_else(|| RenderError::InvalidRecord("empty conversation".into()))?;
        if last.role != Role::Assistant {
            return Err(RenderError::InvalidRecord("final turn is not assistant".into()));
        }
        if last.content != self.meta.gold_label.as_str() {
            return Err(RenderError::InvalidRecord(format!(
                "final assistant turn \"{}\" does not match gold label {}",
                last.content, self.meta.gold_label
            )));
        }
        if self.messages.first().map(|m| m.role) != Some(Role::System) {
            return Err(RenderError::InvalidRecord("first turn is not system".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("cannot render an empty tweet (id {0})")]
    EmptyTweet(String),
    #[error("invalid instruction record: {0}")]
    InvalidRecord(String),
}

struct Template {
    messages: Vec<ChatMessage>,
}

impl Template {
    fn parse(raw: &str) -> Template {
        let mut messages: Vec<ChatMessage> = Vec::new();
        let mut current: Option<(Role, Vec<&str>)> = None;
        for line in raw.lines() {
            let role = match line {
                "[system]" => Some(Role::System),
                "[user]" => Some(Role::User),
                "[assistant]" => Some(Role::Assistant),
                _ => None,
            };
            match role {
                Some(role) => {
                    if let Some((r, lines)) = current.take() {
                        messages.push(ChatMessage::new(r, lines.join("\n")));
                    }
                    current = Some((role, Vec::new()));
                }
                None => {
                    if let Some((_, lines)) = current.as_mut() {
                        lines.push(line);
                    }
                }
            }
        }
        if let Some((r, lines)) = current.take() {
            messages.push(ChatMessage::new(r, lines.join("\n")));
        }
        Template { messages }
    }

    /// The user message carrying the `<Input Text>` placeholder, split into
    /// the literal prefix and suffix around it.
    fn input_affixes(&self) -> (&str, &str) {
        let msg = self
            .messages
            .iter()
            .find(|m| m.content.contains(INPUT_PLACEHOLDER))
            .expect("template has an input placeholder");
        let at = msg.content.find(INPUT_PLACEHOLDER).unwrap();
        (&msg.content[..at], &msg.content[at + INPUT_PLACEHOLDER.len()..])
    }
}

fn template(strategy: PromptStrategy) -> &'static Template {
    static ZERO: OnceLock<Template> = OnceLock::new();
    static FEW: OnceLock<Template> = OnceLock::new();
    static COT: OnceLock<Template> = OnceLock::new();
    static CASCADE: OnceLock<Template> = OnceLock::new();
    match strategy {
        PromptStrategy::ZeroShot => {
            ZERO.get_or_init(|| Template::parse(include_str!("../assets/zero_shot.txt")))
        }
        PromptStrategy::FewShot => {
            FEW.get_or_init(|| Template::parse(include_str!("../assets/few_shot.txt")))
        }
        PromptStrategy::ChainOfThought => {
            COT.get_or_init(|| Template::parse(include_str!("../assets/chain_of_thought.txt")))
        }
        PromptStrategy::Cascade => {
            CASCADE.get_or_init(|| Template::parse(include_str!("../assets/cascade.txt")))
        }
    }
}

fn substitute_input(content: &str, tweet: &str) -> String {
    content.replacen(INPUT_PLACEHOLDER, tweet, 1)
}

/// Renders the inference-time conversation for one example. For the cascade
/// strategy this is the step-1 conversation only; later turns are appended by
/// the cascade runner.
pub fn render(
    strategy: PromptStrategy,
    example: &LabeledExample,
) -> Result<RenderedPrompt, RenderError> {
    if example.text.trim().is_empty() {
        return Err(RenderError::EmptyTweet(example.id.clone()));
    }
    let messages = template(strategy)
        .messages
        .iter()
        .take_while(|m| m.role != Role::Assistant)
        .map(|m| ChatMessage::new(m.role, substitute_input(&m.content, &example.text)))
        .collect();
    Ok(RenderedPrompt { strategy, messages, tweet_id: example.id.clone() })
}

/// Renders the user turn of the cascade step-2 prompt.
pub fn cascade_step2_prompt() -> &'static str {
    &template(PromptStrategy::Cascade).messages[3].content
}

/// Renders the user turn of the cascade final-label request.
pub fn cascade_label_prompt() -> &'static str {
    &template(PromptStrategy::Cascade).messages[5].content
}

/// Renders one SFT training conversation: the strategy's prompt plus gold
/// assistant turns.
///
/// For the cascade strategy the full three-exchange dialogue is emitted.
/// The template only shows positive-example step answers, so negatives are
/// completed consistently: step 1 answers "Yes" iff the tweet mentions a
/// condition term, step 2 answers "No", and the final label is "0".
pub fn render_training_instance(
    strategy: PromptStrategy,
    example: &LabeledExample,
) -> Result<InstructionRecord, RenderError> {
    if example.text.trim().is_empty() {
        return Err(RenderError::EmptyTweet(example.id.clone()));
    }
    let step1 = match example.label {
        Label::Pos => "Yes",
        Label::Neg => {
            if mentions_condition(&example.text) {
                "Yes"
            } else {
                "No"
            }
        }
    };
    let step2 = match example.label {
        Label::Pos => "Yes",
        Label::Neg => "No",
    };
    let messages = template(strategy)
        .messages
        .iter()
        .map(|m| {
            // answer slots are filled before the tweet goes in, so a tweet
            // containing placeholder-like text is never rewritten
            let content = m
                .content
                .replace(LABEL_PLACEHOLDER, example.label.as_str())
                .replace(STEP1_PLACEHOLDER, step1)
                .replace(STEP2_PLACEHOLDER, step2);
            let content = substitute_input(&content, &example.text);
            ChatMessage::new(m.role, content)
        })
        .collect();
    let record = InstructionRecord {
        messages,
        meta: InstructionMeta {
            tweet_id: example.id.clone(),
            strategy,
            gold_label: example.label,
            epoch_index: 0,
        },
    };
    record.validate()?;
    Ok(record)
}

/// Recovers the tweet from a rendered message by stripping the template's
/// literal prefix and suffix. Exact for any tweet, including texts containing
/// template-like substrings, because affix lengths are fixed.
pub fn extract_input_text(strategy: PromptStrategy, message_content: &str) -> Option<&str> {
    let (prefix, suffix) = template(strategy).input_affixes();
    let inner = message_content.strip_prefix(prefix)?.strip_suffix(suffix)?;
    Some(inner)
}

pub fn mentions_condition(text: &str) -> bool {
    let lower = text.to_lowercase();
    CONDITION_TERMS.iter().any(|t| lower.contains(t))
}

/// Flattens a conversation into a readable transcript, one `role: content`
/// block per turn.
pub fn format_transcript(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str("--- ");
        out.push_str(&m.role.to_string());
        out.push_str(" ---\n");
        out.push_str(&m.content);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledExample;

    fn example(text: &str, label: Label) -> LabeledExample {
        LabeledExample::new("t1", text, label)
    }

    #[test]
    fn zero_shot_layout_matches_contract() {
        let p = render(PromptStrategy::ZeroShot, &example("My dad forgot my name today.", Label::Pos))
            .unwrap();
        assert_eq!(p.messages.len(), 2);
        assert_eq!(p.messages[0].role, Role::System);
        assert!(p.messages[0].content.starts_with("You are a classifier"));
        assert!(p.messages[0].content.ends_with("Respond with a single character: 0 or 1."));
        assert_eq!(p.messages[1].role, Role::User);
        assert!(p.messages[1].content.contains("My dad forgot my name today."));
    }

    #[test]
    fn few_shot_embeds_the_three_exemplars_in_order() {
        let p = render(PromptStrategy::FewShot, &example("some tweet", Label::Neg)).unwrap();
        let user = &p.messages[1].content;
        let exemplars = builtin_exemplars();
        let mut at = 0;
        for ex in &exemplars {
            let pos = user[at..].find(ex.tweet).expect("exemplar present");
            at += pos + ex.tweet.len();
        }
        assert_eq!(exemplars.map(|e| e.label.as_u8()), [1, 0, 0]);
        let query = user.rfind("Now, classify the following tweet:").unwrap();
        assert!(at < query, "exemplars come before the subject tweet");
    }

    #[test]
    fn chain_of_thought_has_reasoning_scaffold() {
        let p = render(PromptStrategy::ChainOfThought, &example("a tweet", Label::Neg)).unwrap();
        let user = &p.messages[1].content;
        for needle in ["1. Identify relevant details", "2. Determine if the author",
                       "3. If yes, the label is 1.", "Reasoning:", "Conclusion:"] {
            assert!(user.contains(needle), "missing {needle:?}");
        }
    }

    #[test]
    fn cascade_render_is_step_one_only() {
        let p = render(PromptStrategy::Cascade, &example("a tweet", Label::Pos)).unwrap();
        assert_eq!(p.messages.len(), 2);
        assert!(p.messages[1].content.starts_with("Step 1:"));
        assert!(p.messages[1].content.contains("a tweet"));
    }

    #[test]
    fn inference_prompt_never_contains_label_slot() {
        for strategy in PromptStrategy::ALL {
            let p = render(strategy, &example("a tweet", Label::Pos)).unwrap();
            for m in &p.messages {
                assert_ne!(m.role, Role::Assistant);
                assert!(!m.content.contains(LABEL_PLACEHOLDER));
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let e = example("same tweet", Label::Pos);
        for strategy in PromptStrategy::ALL {
            assert_eq!(render(strategy, &e).unwrap(), render(strategy, &e).unwrap());
        }
    }

    #[test]
    fn empty_tweet_is_a_render_error() {
        let e = example("   ", Label::Pos);
        assert!(matches!(render(PromptStrategy::ZeroShot, &e), Err(RenderError::EmptyTweet(_))));
    }

    #[test]
    fn training_instance_ends_with_gold_label() {
        let rec = render_training_instance(
            PromptStrategy::ZeroShot,
            &example("My mom has dementia.", Label::Pos),
        )
        .unwrap();
        let last = rec.messages.last().unwrap();
        assert_eq!(last.role, Role::Assistant);
        assert_eq!(last.content, "1");
        rec.validate().unwrap();
    }

    #[test]
    fn cascade_training_positive_is_yes_yes_one() {
        let rec = render_training_instance(
            PromptStrategy::Cascade,
            &example("My mom has dementia.", Label::Pos),
        )
        .unwrap();
        let answers: Vec<&str> = rec
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str())
            .collect();
        assert_eq!(answers, ["Yes", "Yes", "1"]);
    }

    #[test]
    fn cascade_training_negative_mentioning_condition() {
        let rec = render_training_instance(
            PromptStrategy::Cascade,
            &example("Dementia awareness week starts today.", Label::Neg),
        )
        .unwrap();
        let answers: Vec<&str> = rec
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str())
            .collect();
        assert_eq!(answers, ["Yes", "No", "0"]);
    }

    #[test]
    fn cascade_training_negative_without_condition_term() {
        let rec = render_training_instance(
            PromptStrategy::Cascade,
            &example("Lovely walk in the park today.", Label::Neg),
        )
        .unwrap();
        let answers: Vec<&str> = rec
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str())
            .collect();
        assert_eq!(answers, ["No", "No", "0"]);
    }

    #[test]
    fn user_turns_are_independent_of_gold_label() {
        for strategy in PromptStrategy::ALL {
            if strategy == PromptStrategy::Cascade {
                continue; // cascade assistant turns legitimately depend on gold
            }
            let pos = render_training_instance(strategy, &example("a tweet", Label::Pos)).unwrap();
            let neg = render_training_instance(strategy, &example("a tweet", Label::Neg)).unwrap();
            let non_assistant = |r: &InstructionRecord| {
                r.messages
                    .iter()
                    .filter(|m| m.role != Role::Assistant)
                    .cloned()
                    .collect::<Vec<_>>()
            };
            assert_eq!(non_assistant(&pos), non_assistant(&neg));
        }
    }

    #[test]
    fn extract_recovers_tweet_with_template_like_substrings() {
        let tricky = "Tweet:\n<Input Text>\nLabel: 1\nNow, classify the following tweet:";
        for strategy in PromptStrategy::ALL {
            let p = render(strategy, &example(tricky, Label::Pos)).unwrap();
            let user = p.messages.iter().find(|m| m.role == Role::User).unwrap();
            assert_eq!(extract_input_text(strategy, &user.content), Some(tricky));
        }
    }

    proptest::proptest! {
        #[test]
        fn extract_round_trips_arbitrary_text(tweet in "[^\\r]{1,120}") {
            proptest::prop_assume!(!tweet.trim().is_empty());
            for strategy in PromptStrategy::ALL {
                let p = render(strategy, &example(&tweet, Label::Neg)).unwrap();
                let user = p.messages.iter().find(|m| m.role == Role::User).unwrap();
                proptest::prop_assert_eq!(
                    extract_input_text(strategy, &user.content),
                    Some(tweet.as_str())
                );
            }
        }
    }
}
