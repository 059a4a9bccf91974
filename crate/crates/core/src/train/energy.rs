//! Energy functions. Lower energy means a more plausible fact.

use crate::compose::{CompositionResult, ComposedPath};
use crate::kg::{EntityId, RelationId};
use crate::train::config::Norm;
use crate::train::embedding::EmbeddingTable;

/// `h + r - t`
pub fn triple_residual(emb: &EmbeddingTable, h: EntityId, r: RelationId, t: EntityId) -> Vec<f64> {
    let mut x: Vec<f64> = emb
        .entity(h)
        .iter()
        .zip(emb.entity(t))
        .map(|(a, b)| a - b)
        .collect();
    emb.add_relation(&mut x, r, 1.0);
    x
}

/// `C(p) - r` where `C(p)` sums the residual relation sequence.
pub fn path_residual(emb: &EmbeddingTable, composed: &[RelationId], r: RelationId) -> Vec<f64> {
    let mut x = vec![0.0; emb.dim()];
    for &c in composed {
        emb.add_relation(&mut x, c, 1.0);
    }
    emb.add_relation(&mut x, r, -1.0);
    x
}

/// `r - r_e`
pub fn relation_residual(emb: &EmbeddingTable, r: RelationId, re: RelationId) -> Vec<f64> {
    let mut x = emb.relation_vector(r);
    emb.add_relation(&mut x, re, -1.0);
    x
}

/// `||h + r - t||`
pub fn energy_triple(emb: &EmbeddingTable, norm: Norm, h: EntityId, r: RelationId, t: EntityId) -> f64 {
    norm.of(&triple_residual(emb, h, r, t))
}

/// `R(p|h,t) * prod(B(p)) * ||C(p) - r||`
pub fn energy_path(
    emb: &EmbeddingTable,
    norm: Norm,
    reliability: f64,
    composition: &CompositionResult,
    r: RelationId,
) -> f64 {
    reliability
        * composition.confidence_product()
        * norm.of(&path_residual(emb, &composition.residual, r))
}

pub fn energy_composed_path(emb: &EmbeddingTable, norm: Norm, path: &ComposedPath, r: RelationId) -> f64 {
    path.weight * norm.of(&path_residual(emb, &path.composition.residual, r))
}

/// `||r - r_e||`
pub fn energy_relpair(emb: &EmbeddingTable, norm: Norm, r: RelationId, re: RelationId) -> f64 {
    norm.of(&relation_residual(emb, r, re))
}
