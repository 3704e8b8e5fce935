//! Two-step cascade protocol: first ask whether dementia/Alzheimer's is
//! mentioned at all, then whether a family member is affected.
//!
//! Decision table: No -> 0, (Yes, No) -> 0, (Yes, Yes) -> 1. A step-1 "No"
//! short-circuits without a step-2 call.

use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, Decoding};
use crate::dataset::{Label, LabeledExample};
use crate::parsing::{extract_yes_no, ParseError, YesNo};
use crate::prompts::{
    cascade_label_prompt, cascade_step2_prompt, render, ChatMessage, PromptStrategy, RenderError,
    Role,
};

/// State of one multi-turn cascade run. The transcript grows append-only.
#[derive(Debug, Clone)]
pub struct CascadeSession {
    pub tweet_id: String,
    pub step1_answer: Option<YesNo>,
    pub step2_answer: Option<YesNo>,
    pub final_label: Option<Label>,
    pub transcript: Vec<ChatMessage>,
    /// Number of backend calls issued.
    pub calls: u32,
    /// Set when the optional model-driven label turn disagreed with the
    /// label computed from the step answers.
    pub label_turn_disagreement: Option<Label>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CascadeOptions {
    /// Issue the template's third turn and let the model state the label.
    /// The computed label still wins; a mismatch is only reported.
    pub issue_label_turn: bool,
}

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("step {step}: could not parse yes/no from completion {completion:?}")]
    UnparseableStep { step: u8, completion: String },
}

/// The label forced by the step answers.
pub fn decide(step1: YesNo, step2: Option<YesNo>) -> Label {
    match (step1, step2) {
        (YesNo::Yes, Some(YesNo::Yes)) => Label::Pos,
        _ => Label::Neg,
    }
}

/// Runs the cascade for one example, driving the backend turn by turn.
pub fn run_cascade(
    backend: &dyn ChatBackend,
    example: &LabeledExample,
    options: CascadeOptions,
) -> Result<CascadeSession, CascadeError> {
    let decoding = Decoding::for_strategy(PromptStrategy::Cascade);
    let prompt = render(PromptStrategy::Cascade, example)?;
    let mut session = CascadeSession {
        tweet_id: example.id.clone(),
        step1_answer: None,
        step2_answer: None,
        final_label: None,
        transcript: prompt.messages,
        calls: 0,
        label_turn_disagreement: None,
    };

    let step1 = ask_yes_no(backend, &decoding, &mut session, 1)?;
    session.step1_answer = Some(step1);

    if step1 == YesNo::Yes {
        session
            .transcript
            .push(ChatMessage::new(Role::User, cascade_step2_prompt()));
        let step2 = ask_yes_no(backend, &decoding, &mut session, 2)?;
        session.step2_answer = Some(step2);
    }

    let computed = decide(step1, session.step2_answer);

    if options.issue_label_turn {
        session
            .transcript
            .push(ChatMessage::new(Role::User, cascade_label_prompt()));
        let response = backend.complete(&session.transcript, &decoding)?;
        session.calls += 1;
        session
            .transcript
            .push(ChatMessage::new(Role::Assistant, response.content.clone()));
        // computed label wins; the model's dissent is recorded, not adopted
        if let Ok(parsed) = crate::parsing::extract_binary_label(&response.content) {
            if parsed.label != computed {
                session.label_turn_disagreement = Some(parsed.label);
            }
        }
    }

    session.final_label = Some(computed);
    Ok(session)
}

fn ask_yes_no(
    backend: &dyn ChatBackend,
    decoding: &Decoding,
    session: &mut CascadeSession,
    step: u8,
) -> Result<YesNo, CascadeError> {
    let response = backend.complete(&session.transcript, decoding)?;
    session.calls += 1;
    session
        .transcript
        .push(ChatMessage::new(Role::Assistant, response.content.clone()));
    extract_yes_no(&response.content).map_err(|e| match e {
        ParseError::UnparseableAnswer(completion) | ParseError::UnparseableLabel(completion) => {
            CascadeError::UnparseableStep { step, completion }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptedBackend, StubBackend, StubRule};

    fn example(text: &str) -> LabeledExample {
        LabeledExample::new("t", text, Label::Pos)
    }

    #[test]
    fn yes_yes_is_positive_with_two_calls() {
        let backend = ScriptedBackend::new(["Yes", "Yes"]);
        let s = run_cascade(&backend, &example("tweet"), CascadeOptions::default()).unwrap();
        assert_eq!(s.final_label, Some(Label::Pos));
        assert_eq!(s.calls, 2);
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn no_short_circuits_with_one_call() {
        let backend = ScriptedBackend::new(["No"]);
        let s = run_cascade(&backend, &example("tweet"), CascadeOptions::default()).unwrap();
        assert_eq!(s.final_label, Some(Label::Neg));
        assert_eq!(s.step2_answer, None);
        assert_eq!(backend.call_count(), 1);
    }

    #[test]
    fn yes_no_is_negative_with_two_calls() {
        let backend = ScriptedBackend::new(["Yes", "No"]);
        let s = run_cascade(&backend, &example("tweet"), CascadeOptions::default()).unwrap();
        assert_eq!(s.final_label, Some(Label::Neg));
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn label_turn_adds_one_call_and_computed_label_wins() {
        let backend = ScriptedBackend::new(["Yes", "Yes", "0"]);
        let s = run_cascade(
            &backend,
            &example("tweet"),
            CascadeOptions { issue_label_turn: true },
        )
        .unwrap();
        // model said 0, step answers force 1
        assert_eq!(s.final_label, Some(Label::Pos));
        assert_eq!(s.label_turn_disagreement, Some(Label::Neg));
        assert_eq!(backend.call_count(), 3);
        assert_eq!(s.transcript.last().unwrap().content, "0");
    }

    #[test]
    fn unparseable_step_is_an_error_with_raw_completion() {
        let backend = ScriptedBackend::new(["perhaps"]);
        let err =
            run_cascade(&backend, &example("tweet"), CascadeOptions::default()).unwrap_err();
        match err {
            CascadeError::UnparseableStep { step, completion } => {
                assert_eq!(step, 1);
                assert_eq!(completion, "perhaps");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn transcript_grows_append_only_and_alternates() {
        let backend = ScriptedBackend::new(["Yes", "No"]);
        let s = run_cascade(&backend, &example("tweet"), CascadeOptions::default()).unwrap();
        let roles: Vec<Role> = s.transcript.iter().map(|m| m.role).collect();
        assert_eq!(
            roles,
            [Role::System, Role::User, Role::Assistant, Role::User, Role::Assistant]
        );
    }

    #[test]
    fn cascade_agrees_with_direct_stub_rule() {
        let rule = StubRule::default();
        let backend = StubBackend::new(rule.clone());
        let tweets = [
            "My mom has dementia and it breaks my heart",
            "Dementia awareness month is here",
            "my grandfather's alzheimer is getting worse",
            "went for a run, lovely weather",
            "our dad was diagnosed with Alzheimer's last week",
            "my dementia joke went too far",
        ];
        for tweet in tweets {
            let s = run_cascade(&backend, &example(tweet), CascadeOptions::default()).unwrap();
            let expected = if rule.matches(tweet) { Label::Pos } else { Label::Neg };
            assert_eq!(s.final_label, Some(expected), "tweet: {tweet}");
        }
    }
}
