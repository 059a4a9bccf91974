//! Knowledge-graph embedding with rule-guided path composition.
//!
//! Triples, chain rules and multi-step paths feed a translational model in
//! which relation paths are first rewritten by length-2 rules and then summed,
//! and rule-associated relation pairs are pulled together.

pub mod compose;
pub mod error;
pub mod eval;
pub mod kg;
pub mod paths;
pub mod pipeline;
pub mod rules;
pub mod synth;
pub mod train;

pub use compose::{compose_symbolic, ComposedPath, ComposedPaths, CompositionResult};
pub use error::{Error, Result};
pub use eval::{evaluate, explain, EvalReport, Scorer, Setting, Slot, Task};
pub use kg::{EntityId, KnowledgeGraph, RelationId, Split, Triple};
pub use paths::{extract_paths, extract_query_paths, Path, PathConfig, PathSet};
pub use rules::{ChainRule, RuleFormat, RuleIndex};
pub use train::{train, EmbeddingTable, Norm, TrainContext, Trainer, TrainingConfig};
