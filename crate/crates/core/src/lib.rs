//! Harness for classifying tweets whose authors have a family member with
//! dementia: dataset balancing, four prompting strategies, a two-step cascade
//! protocol, label parsing, evaluation, error analysis, and SFT export.

pub mod analysis;
pub mod backend;
pub mod cascade;
pub mod dataset;
pub mod export;
pub mod inference;
pub mod metrics;
pub mod parsing;
pub mod prompts;

pub use dataset::{ClassDistribution, DatasetSplit, LabeledExample, Label};
pub use prompts::{ChatMessage, PromptStrategy, RenderedPrompt, Role};
