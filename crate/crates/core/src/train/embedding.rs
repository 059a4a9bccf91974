use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::train::config::TrainingConfig;

/// Dense entity and relation vectors.
///
/// Only base relations are stored. A relation id `>= num_base_relations`
/// denotes the inverse of `id - num_base_relations` and reads as the
/// negated base vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    n_entities: usize,
    n_relations: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(dim: usize, n_entities: usize, n_relations: usize) -> Self {
        EmbeddingTable {
            dim,
            n_entities,
            n_relations,
            entities: vec![0.0; dim * n_entities],
            relations: vec![0.0; dim * n_relations],
        }
    }

    pub fn from_rows(dim: usize, entities: Vec<Vec<f64>>, relations: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if entities.iter().chain(&relations).any(|row| row.len() != dim) {
            return Err(Error::InvalidInput(format!("every row must have length {dim}")));
        }
        Ok(EmbeddingTable {
            dim,
            n_entities: entities.len(),
            n_relations: relations.len(),
            entities: entities.concat(),
            relations: relations.concat(),
        })
    }

    pub(crate) fn from_flat(
        dim: usize,
        n_entities: usize,
        n_relations: usize,
        entities: Vec<f64>,
        relations: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(entities.len(), dim * n_entities);
        debug_assert_eq!(relations.len(), dim * n_relations);
        EmbeddingTable {
            dim,
            n_entities,
            n_relations,
            entities,
            relations,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.n_entities
    }

    pub fn num_base_relations(&self) -> usize {
        self.n_relations
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        let i = e.index() * self.dim;
        &self.entities[i..i + self.dim]
    }

    pub fn entity_mut(&mut self, e: EntityId) -> &mut [f64] {
        let i = e.index() * self.dim;
        &mut self.entities[i..i + self.dim]
    }

    /// Base relation vector; panics on inverse ids.
    pub fn base_relation(&self, r: RelationId) -> &[f64] {
        assert!(r.index() < self.n_relations, "{r} is not a base relation");
        let i = r.index() * self.dim;
        &self.relations[i..i + self.dim]
    }

    pub fn base_relation_mut(&mut self, r: RelationId) -> &mut [f64] {
        assert!(r.index() < self.n_relations, "{r} is not a base relation");
        let i = r.index() * self.dim;
        &mut self.relations[i..i + self.dim]
    }

    /// Splits an id into (base id, sign).
    #[inline]
    pub fn resolve(&self, r: RelationId) -> (RelationId, f64) {
        if r.index() < self.n_relations {
            (r, 1.0)
        } else {
            (RelationId(r.0 - self.n_relations as u32), -1.0)
        }
    }

    pub fn check_relation(&self, r: RelationId) -> Result<()> {
        if r.index() < 2 * self.n_relations {
            Ok(())
        } else {
            Err(Error::Lookup(format!("relation id {} has no embedding", r.0)))
        }
    }

    pub fn check_entity(&self, e: EntityId) -> Result<()> {
        if e.index() < self.n_entities {
            Ok(())
        } else {
            Err(Error::Lookup(format!("entity id {} has no embedding", e.0)))
        }
    }

    /// `out += scale * vec(r)`, with inverse ids contributing the negated base vector.
    #[inline]
    pub fn add_relation(&self, out: &mut [f64], r: RelationId, scale: f64) {
        let (base, sign) = self.resolve(r);
        let s = scale * sign;
        for (o, v) in out.iter_mut().zip(self.base_relation(base)) {
            *o += s * v;
        }
    }

    pub fn relation_vector(&self, r: RelationId) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.add_relation(&mut out, r, 1.0);
        out
    }

    /// Rescales an entity vector onto the unit sphere if it lies outside the unit ball.
    pub fn project_entity(&mut self, e: EntityId) {
        let v = self.entity_mut(e);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1.0 {
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
    }

    pub fn max_entity_norm(&self) -> f64 {
        self.entities
            .chunks_exact(self.dim)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|v| v.is_finite())
    }

    pub fn entity_data(&self) -> &[f64] {
        &self.entities
    }

    pub fn relation_data(&self) -> &[f64] {
        &self.relations
    }
}

/// Uniform in `[-6/sqrt(d), 6/sqrt(d)]` per coordinate, then scaled to unit
/// length. Entities are drawn before relations from a ChaCha8 stream 0.
pub fn init_embeddings(kg: &KnowledgeGraph, cfg: &TrainingConfig) -> Result<EmbeddingTable> {
    if cfg.dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let bound = 6.0 / (cfg.dim as f64).sqrt();
    let mut draw = |count: usize| {
        let mut data: Vec<f64> = (0..count * cfg.dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        for v in data.chunks_exact_mut(cfg.dim) {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
        data
    };
    let entities = draw(kg.num_entities());
    let relations = draw(kg.num_base_relations());
    Ok(EmbeddingTable::from_flat(
        cfg.dim,
        kg.num_entities(),
        kg.num_base_relations(),
        entities,
        relations,
    ))
}
