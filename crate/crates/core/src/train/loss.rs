//! Margin losses and their subgradients.
//!
//! Each hinge term `max(0, margin + pos - neg)` is written as a function of
//! the difference vectors inside the norms so the subgradient is the norm's
//! subgradient pushed back through a linear map.

use std::collections::BTreeMap;

use crate::compose::{ComposedPath, ComposedPaths};
use crate::error::Result;
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::rules::RuleIndex;
use crate::train::config::{Norm, TrainingConfig};
use crate::train::embedding::EmbeddingTable;
use crate::train::energy::{path_residual, relation_residual, triple_residual};
use crate::train::sampler::NegativeSampler;

/// Gradient restricted to the rows a batch touched. Relation rows are keyed
/// by base id; inverse contributions arrive negated.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseGradient {
    pub entities: BTreeMap<EntityId, Vec<f64>>,
    pub relations: BTreeMap<RelationId, Vec<f64>>,
}

impl SparseGradient {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty()
    }

    pub fn add_entity(&mut self, e: EntityId, scale: f64, g: &[f64]) {
        let row = self
            .entities
            .entry(e)
            .or_insert_with(|| vec![0.0; g.len()]);
        for (o, v) in row.iter_mut().zip(g) {
            *o += scale * v;
        }
    }

    pub fn add_relation(&mut self, emb: &EmbeddingTable, r: RelationId, scale: f64, g: &[f64]) {
        let (base, sign) = emb.resolve(r);
        let row = self
            .relations
            .entry(base)
            .or_insert_with(|| vec![0.0; g.len()]);
        let s = scale * sign;
        for (o, v) in row.iter_mut().zip(g) {
            *o += s * v;
        }
    }

    pub fn merge(&mut self, other: &SparseGradient) {
        for (&e, g) in &other.entities {
            self.add_entity(e, 1.0, g);
        }
        for (&r, g) in &other.relations {
            let row = self.relations.entry(r).or_insert_with(|| vec![0.0; g.len()]);
            for (o, v) in row.iter_mut().zip(g) {
                *o += v;
            }
        }
    }

    /// `param -= lr * grad`, then projects every touched entity into the unit ball.
    pub fn apply(&self, emb: &mut EmbeddingTable, lr: f64) {
        for (&e, g) in &self.entities {
            for (p, v) in emb.entity_mut(e).iter_mut().zip(g) {
                *p -= lr * v;
            }
        }
        for (&r, g) in &self.relations {
            for (p, v) in emb.base_relation_mut(r).iter_mut().zip(g) {
                *p -= lr * v;
            }
        }
        for &e in self.entities.keys() {
            emb.project_entity(e);
        }
    }
}

/// Weighted loss contributions of one batch.
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct BatchLoss {
    pub triple: f64,
    pub path: f64,
    pub relation: f64,
}

impl BatchLoss {
    pub fn total(&self) -> f64 {
        self.triple + self.path + self.relation
    }

    pub fn add(&mut self, other: &BatchLoss) {
        self.triple += other.triple;
        self.path += other.path;
        self.relation += other.relation;
    }
}

/// `scale * max(0, margin + E1(pos) - E1(neg))`
pub fn triple_hinge(
    emb: &EmbeddingTable,
    norm: Norm,
    margin: f64,
    pos: Triple,
    neg: Triple,
    scale: f64,
    grad: &mut SparseGradient,
) -> f64 {
    let xp = triple_residual(emb, pos.head, pos.relation, pos.tail);
    let xn = triple_residual(emb, neg.head, neg.relation, neg.tail);
    let hinge = margin + norm.of(&xp) - norm.of(&xn);
    if hinge <= 0.0 {
        return 0.0;
    }
    let mut g = vec![0.0; emb.dim()];
    norm.subgradient(&xp, &mut g);
    grad.add_entity(pos.head, scale, &g);
    grad.add_relation(emb, pos.relation, scale, &g);
    grad.add_entity(pos.tail, -scale, &g);
    norm.subgradient(&xn, &mut g);
    grad.add_entity(neg.head, -scale, &g);
    grad.add_relation(emb, neg.relation, -scale, &g);
    grad.add_entity(neg.tail, scale, &g);
    scale * hinge
}

/// `scale * max(0, margin + w ||C(p) - r|| - w ||C(p) - r'||)` with `w = R(p|h,t) * prod(B(p))`.
#[allow(clippy::too_many_arguments)]
pub fn path_hinge(
    emb: &EmbeddingTable,
    norm: Norm,
    margin: f64,
    path: &ComposedPath,
    r: RelationId,
    r_neg: RelationId,
    scale: f64,
    grad: &mut SparseGradient,
) -> f64 {
    let composed = &path.composition.residual;
    let w = path.weight;
    let xp = path_residual(emb, composed, r);
    let xn = path_residual(emb, composed, r_neg);
    let hinge = margin + w * norm.of(&xp) - w * norm.of(&xn);
    if hinge <= 0.0 {
        return 0.0;
    }
    let mut g = vec![0.0; emb.dim()];
    norm.subgradient(&xp, &mut g);
    for &c in composed {
        grad.add_relation(emb, c, scale * w, &g);
    }
    grad.add_relation(emb, r, -scale * w, &g);
    norm.subgradient(&xn, &mut g);
    for &c in composed {
        grad.add_relation(emb, c, -scale * w, &g);
    }
    grad.add_relation(emb, r_neg, scale * w, &g);
    scale * hinge
}

/// `scale * max(0, margin + beta ||r - r_e|| - ||r - r'||)`
#[allow(clippy::too_many_arguments)]
pub fn relation_hinge(
    emb: &EmbeddingTable,
    norm: Norm,
    margin: f64,
    r: RelationId,
    deduced: RelationId,
    beta: f64,
    r_neg: RelationId,
    scale: f64,
    grad: &mut SparseGradient,
) -> f64 {
    let xp = relation_residual(emb, r, deduced);
    let xn = relation_residual(emb, r, r_neg);
    let hinge = margin + beta * norm.of(&xp) - norm.of(&xn);
    if hinge <= 0.0 {
        return 0.0;
    }
    let mut g = vec![0.0; emb.dim()];
    norm.subgradient(&xp, &mut g);
    grad.add_relation(emb, r, scale * beta, &g);
    grad.add_relation(emb, deduced, -scale * beta, &g);
    norm.subgradient(&xn, &mut g);
    grad.add_relation(emb, r, -scale, &g);
    grad.add_relation(emb, r_neg, scale, &g);
    scale * hinge
}

/// Read-only training inputs.
#[derive(Copy, Clone)]
pub struct TrainContext<'a> {
    pub kg: &'a KnowledgeGraph,
    pub paths: &'a ComposedPaths,
    pub rules: &'a RuleIndex,
}

/// Loss and gradient of one batch.
///
/// Per positive `(h, r, t)`, negatives are drawn in a fixed order: corrupted
/// head, corrupted relation, corrupted tail; then one relation per path of
/// `(h, t)`; then one relation per entry of `D(r)`. Terms that are switched
/// off draw nothing.
pub fn loss_and_gradients(
    batch: &[Triple],
    ctx: TrainContext<'_>,
    emb: &EmbeddingTable,
    cfg: &TrainingConfig,
    sampler: &mut NegativeSampler,
) -> Result<(BatchLoss, SparseGradient)> {
    let mut loss = BatchLoss::default();
    let mut grad = SparseGradient::default();
    let norm = cfg.norm;
    for &pos in batch {
        let negatives = [
            sampler.corrupt_head(ctx.kg, pos),
            sampler.corrupt_relation(ctx.kg, pos),
            sampler.corrupt_tail(ctx.kg, pos),
        ];
        for neg in negatives.into_iter().flatten() {
            loss.triple += triple_hinge(emb, norm, cfg.margin_triple, pos, neg, 1.0, &mut grad);
        }

        if cfg.uses_paths() {
            for path in ctx.paths.get(pos.head, pos.tail) {
                let Some(neg) = sampler.corrupt_relation(ctx.kg, pos) else {
                    continue;
                };
                loss.path += path_hinge(
                    emb,
                    norm,
                    cfg.margin_path,
                    path,
                    pos.relation,
                    neg.relation,
                    cfg.alpha_path,
                    &mut grad,
                );
            }
        }

        if cfg.uses_relation_pairs() {
            let deduced = ctx.rules.deduced(pos.relation);
            for &(re, beta) in deduced {
                let Some(r_neg) = sampler.unrelated_relation(ctx.kg, pos.relation, deduced) else {
                    continue;
                };
                loss.relation += relation_hinge(
                    emb,
                    norm,
                    cfg.margin_relation,
                    pos.relation,
                    re,
                    beta,
                    r_neg,
                    cfg.alpha_relation,
                    &mut grad,
                );
            }
        }
    }
    Ok((loss, grad))
}
