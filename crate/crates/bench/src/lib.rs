//! Shared fixtures for the benchmarks.

use std::path::Path;

use rulepath_core::rules::{index_parsed, parse_rules_str};
use rulepath_core::synth::{generate, SynthConfig};
use rulepath_core::{KnowledgeGraph, RuleFormat, RuleIndex, TrainingConfig};

pub struct Fixture {
    pub kg: KnowledgeGraph,
    pub rules: RuleIndex,
    pub config: TrainingConfig,
}

/// The synthetic family world with its rules, at `founder_couples` scale.
pub fn family(founder_couples: usize) -> Fixture {
    let ds = generate(&SynthConfig {
        founder_couples,
        ..SynthConfig::default()
    });
    let kg = ds.knowledge_graph().expect("synthetic world is well formed");
    let config = TrainingConfig {
        dim: 50,
        epochs: 1,
        ..TrainingConfig::default()
    };
    let parsed = parse_rules_str(&ds.rules(), Path::new("synthetic"), RuleFormat::Normalized, &kg)
        .expect("synthetic rules parse");
    let (rules, _, _) = index_parsed(&kg, &parsed, config.confidence_threshold);
    Fixture { kg, rules, config }
}
