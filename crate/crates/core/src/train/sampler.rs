use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

/// Rejection sampler for corrupted triples and relations.
///
/// Every draw is `gen_range(0..n)` on a ChaCha8 stream seeded from the
/// training seed (stream 1), so an independent trainer replaying the same
/// calls sees the same negatives.
pub struct NegativeSampler {
    rng: ChaCha8Rng,
    attempts: usize,
}

impl NegativeSampler {
    pub fn new(seed: u64, attempts: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        NegativeSampler { rng, attempts }
    }

    pub fn with_rng(rng: ChaCha8Rng, attempts: usize) -> Self {
        NegativeSampler { rng, attempts }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }

    fn find<T>(&mut self, mut draw: impl FnMut(&mut ChaCha8Rng) -> Option<T>) -> Option<T> {
        for _ in 0..self.attempts {
            if let Some(found) = draw(&mut self.rng) {
                return Some(found);
            }
        }
        None
    }

    /// `(h', r, t)` not in train.
    pub fn corrupt_head(&mut self, kg: &KnowledgeGraph, t: Triple) -> Option<Triple> {
        let n = kg.num_entities() as u32;
        self.find(|rng| {
            let cand = Triple::new(EntityId(rng.gen_range(0..n)), t.relation, t.tail);
            (!kg.in_train(cand)).then_some(cand)
        })
    }

    /// `(h, r, t')` not in train.
    pub fn corrupt_tail(&mut self, kg: &KnowledgeGraph, t: Triple) -> Option<Triple> {
        let n = kg.num_entities() as u32;
        self.find(|rng| {
            let cand = Triple::new(t.head, t.relation, EntityId(rng.gen_range(0..n)));
            (!kg.in_train(cand)).then_some(cand)
        })
    }

    /// `(h, r', t)` not in train, `r'` a base relation.
    pub fn corrupt_relation(&mut self, kg: &KnowledgeGraph, t: Triple) -> Option<Triple> {
        let n = kg.num_base_relations() as u32;
        self.find(|rng| {
            let cand = Triple::new(t.head, RelationId(rng.gen_range(0..n)), t.tail);
            (!kg.in_train(cand)).then_some(cand)
        })
    }

    /// A base relation other than `r` that is not among `deduced`.
    pub fn unrelated_relation(
        &mut self,
        kg: &KnowledgeGraph,
        r: RelationId,
        deduced: &[(RelationId, f64)],
    ) -> Option<RelationId> {
        let n = kg.num_base_relations() as u32;
        self.find(|rng| {
            let cand = RelationId(rng.gen_range(0..n));
            (cand != r && deduced.iter().all(|&(d, _)| d != cand)).then_some(cand)
        })
    }
}
