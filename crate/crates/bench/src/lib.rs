//! Shared fixtures for the criterion benchmarks.

use caretag_core::dataset::{DatasetSplit, Label, LabeledExample};

/// A split shaped like the task's training data (4523 / 2201).
pub fn training_shaped_split() -> DatasetSplit {
    let mut examples = Vec::with_capacity(6724);
    for i in 0..4523 {
        examples.push(LabeledExample::new(
            format!("p{i}"),
            format!("My mom has dementia, visit {i}."),
            Label::Pos,
        ));
    }
    for i in 0..2201 {
        examples.push(LabeledExample::new(
            format!("n{i}"),
            format!("Dementia awareness item {i}."),
            Label::Neg,
        ));
    }
    DatasetSplit { name: "training".into(), examples }
}
