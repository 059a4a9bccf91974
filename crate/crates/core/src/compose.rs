//! Symbolic path composition with length-2 chain rules.
//!
//! A path's relation sequence is rewritten in place: the leftmost adjacent
//! pair that is the body of an indexed rule is replaced by that rule's head,
//! and scanning restarts from the left. The process stops when no adjacent
//! pair matches. Whatever remains is composed numerically by summing the
//! relation vectors.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::Result;
use crate::kg::{EntityId, RelationId};
use crate::paths::PathSet;
use crate::rules::RuleIndex;
use crate::train::EmbeddingTable;

#[derive(Clone, Debug, PartialEq)]
pub struct AppliedRule {
    pub body: (RelationId, RelationId),
    pub head: RelationId,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositionResult {
    pub residual: Vec<RelationId>,
    /// Rules in application order; their confidences form `B(p)`.
    pub applied: Vec<AppliedRule>,
}

impl CompositionResult {
    pub fn fully_composed(&self) -> bool {
        self.residual.len() == 1
    }

    pub fn applied_confidences(&self) -> impl Iterator<Item = f64> + '_ {
        self.applied.iter().map(|r| r.confidence)
    }

    /// Product of the applied confidences; 1 when no rule fired.
    pub fn confidence_product(&self) -> f64 {
        self.applied_confidences().product()
    }
}

pub fn compose_symbolic(relations: &[RelationId], rules: &RuleIndex) -> CompositionResult {
    let mut residual = relations.to_vec();
    let mut applied = Vec::new();
    'scan: loop {
        for i in 0..residual.len().saturating_sub(1) {
            if let Some(rule) = rules.compose(residual[i], residual[i + 1]) {
                applied.push(AppliedRule {
                    body: (residual[i], residual[i + 1]),
                    head: rule.head,
                    confidence: rule.confidence,
                });
                residual.splice(i..i + 2, [rule.head]);
                continue 'scan;
            }
        }
        break;
    }
    CompositionResult { residual, applied }
}

/// `C(p)` as a vector: the sum of the residual relations' embeddings.
pub fn compose_embedding(cr: &CompositionResult, emb: &EmbeddingTable) -> Result<Vec<f64>> {
    let mut out = vec![0.0; emb.dim()];
    for &r in &cr.residual {
        emb.check_relation(r)?;
        emb.add_relation(&mut out, r, 1.0);
    }
    Ok(out)
}

pub fn confidence_product(cr: &CompositionResult) -> f64 {
    cr.confidence_product()
}

/// Memoizes compositions per relation sequence.
pub struct Composer<'a> {
    rules: &'a RuleIndex,
    memo: HashMap<Vec<RelationId>, Arc<CompositionResult>>,
}

impl<'a> Composer<'a> {
    pub fn new(rules: &'a RuleIndex) -> Self {
        Composer {
            rules,
            memo: HashMap::new(),
        }
    }

    pub fn compose(&mut self, relations: &[RelationId]) -> Arc<CompositionResult> {
        if let Some(hit) = self.memo.get(relations) {
            return Arc::clone(hit);
        }
        let result = Arc::new(compose_symbolic(relations, self.rules));
        self.memo.insert(relations.to_vec(), Arc::clone(&result));
        result
    }

    pub fn cache_len(&self) -> usize {
        self.memo.len()
    }
}

/// A path with its composition and its static energy weight
/// `R(p|h,t) * prod(B(p))`.
#[derive(Clone, Debug)]
pub struct ComposedPath {
    pub relations: Vec<RelationId>,
    pub reliability: f64,
    pub composition: Arc<CompositionResult>,
    pub weight: f64,
}

/// Paths of a [`PathSet`] composed once against a rule index.
#[derive(Clone, Debug, Default)]
pub struct ComposedPaths {
    pairs: HashMap<(EntityId, EntityId), Vec<ComposedPath>>,
}

impl ComposedPaths {
    pub fn build(paths: &PathSet, rules: &RuleIndex) -> Self {
        let mut composer = Composer::new(rules);
        let mut pairs = HashMap::with_capacity(paths.num_pairs());
        for ((h, t), list) in paths.iter() {
            let composed = list
                .iter()
                .map(|p| {
                    let composition = composer.compose(&p.relations);
                    ComposedPath {
                        relations: p.relations.clone(),
                        reliability: p.reliability,
                        weight: p.reliability * composition.confidence_product(),
                        composition,
                    }
                })
                .collect();
            pairs.insert((h, t), composed);
        }
        ComposedPaths { pairs }
    }

    pub fn get(&self, head: EntityId, tail: EntityId) -> &[ComposedPath] {
        self.pairs
            .get(&(head, tail))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }
}
