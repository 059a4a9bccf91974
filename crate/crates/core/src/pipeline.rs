//! Path extraction, training and evaluation wired together.

use crate::compose::ComposedPaths;
use crate::error::Result;
use crate::eval::{evaluate, EvalReport, Scorer};
use crate::kg::{KnowledgeGraph, Triple};
use crate::paths::{extract_paths, extract_query_paths, PathSet};
use crate::rules::RuleIndex;
use crate::train::{train, EmbeddingTable, EpochLoss, TrainContext, TrainingConfig};

/// Train-pair paths, empty when the path term is disabled.
pub fn training_paths(kg: &KnowledgeGraph, cfg: &TrainingConfig) -> Result<PathSet> {
    if cfg.uses_paths() {
        extract_paths(kg, &cfg.path_config())
    } else {
        Ok(PathSet::empty(cfg.path_config()))
    }
}

/// Paths touching the heads and tails of `queries`, empty when the path term is disabled.
pub fn query_paths(kg: &KnowledgeGraph, cfg: &TrainingConfig, queries: &[Triple]) -> Result<PathSet> {
    if cfg.uses_paths() {
        extract_query_paths(kg, &cfg.path_config(), queries)
    } else {
        Ok(PathSet::empty(cfg.path_config()))
    }
}

pub fn fit(
    kg: &KnowledgeGraph,
    rules: &RuleIndex,
    paths: &PathSet,
    cfg: &TrainingConfig,
) -> Result<(EmbeddingTable, Vec<EpochLoss>)> {
    let composed = ComposedPaths::build(paths, rules);
    train(
        TrainContext {
            kg,
            paths: &composed,
            rules,
        },
        cfg,
    )
}

pub fn scorer_alpha(cfg: &TrainingConfig) -> f64 {
    if cfg.uses_paths() {
        cfg.alpha_path
    } else {
        0.0
    }
}

pub fn evaluate_on(
    kg: &KnowledgeGraph,
    rules: &RuleIndex,
    emb: &EmbeddingTable,
    cfg: &TrainingConfig,
    queries: &[Triple],
) -> Result<Vec<EvalReport>> {
    let composed = ComposedPaths::build(&query_paths(kg, cfg, queries)?, rules);
    let scorer = Scorer {
        embeddings: emb,
        paths: &composed,
        norm: cfg.norm,
        alpha_path: scorer_alpha(cfg),
    };
    evaluate(&scorer, kg, queries)
}

/// Extracts paths, trains and evaluates on the test split.
pub fn fit_and_evaluate(
    kg: &KnowledgeGraph,
    rules: &RuleIndex,
    cfg: &TrainingConfig,
) -> Result<(EmbeddingTable, Vec<EvalReport>)> {
    let paths = training_paths(kg, cfg)?;
    let (emb, _) = fit(kg, rules, &paths, cfg)?;
    let reports = evaluate_on(kg, rules, &emb, cfg, kg.test())?;
    Ok((emb, reports))
}
