//! Joint training of entity and relation embeddings on triples, composed
//! paths and rule-associated relation pairs.

mod checkpoint;
mod config;
mod embedding;
mod energy;
mod loss;
mod sampler;

use rayon::prelude::*;

pub use checkpoint::{write_loss_csv, Checkpoint};
pub use config::{Ablation, Norm, TrainingConfig};
pub use embedding::{init_embeddings, EmbeddingTable};
pub use energy::{
    energy_composed_path, energy_path, energy_relpair, energy_triple, path_residual,
    relation_residual, triple_residual,
};
pub use loss::{
    loss_and_gradients, path_hinge, relation_hinge, triple_hinge, BatchLoss, SparseGradient,
    TrainContext,
};
pub use sampler::NegativeSampler;

use crate::error::{Error, Result};
use crate::kg::Triple;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: BatchLoss,
}

/// Stateful SGD loop over one configuration.
pub struct Trainer<'a> {
    ctx: TrainContext<'a>,
    cfg: TrainingConfig,
    emb: EmbeddingTable,
    sampler: NegativeSampler,
    order: Vec<usize>,
    epoch: usize,
    history: Vec<EpochLoss>,
}

impl<'a> Trainer<'a> {
    pub fn new(ctx: TrainContext<'a>, cfg: TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        let emb = init_embeddings(ctx.kg, &cfg)?;
        Ok(Self::with_embeddings(ctx, cfg, emb))
    }

    pub fn with_embeddings(ctx: TrainContext<'a>, cfg: TrainingConfig, emb: EmbeddingTable) -> Self {
        let sampler = NegativeSampler::new(cfg.seed, cfg.negative_attempts);
        Trainer {
            ctx,
            order: (0..ctx.kg.train().len()).collect(),
            cfg,
            emb,
            sampler,
            epoch: 0,
            history: Vec::new(),
        }
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.emb
    }

    pub fn into_embeddings(self) -> EmbeddingTable {
        self.emb
    }

    pub fn history(&self) -> &[EpochLoss] {
        &self.history
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.cfg
    }

    /// One SGD step on `batch`; returns the batch loss.
    pub fn step(&mut self, batch: &[Triple]) -> Result<BatchLoss> {
        let (loss, grad) = if self.cfg.deterministic {
            loss_and_gradients(batch, self.ctx, &self.emb, &self.cfg, &mut self.sampler)?
        } else {
            self.parallel_gradients(batch)?
        };
        if !loss.total().is_finite() {
            return Err(Error::Divergence {
                epoch: self.epoch,
                batch: 0,
                loss: loss.total(),
            });
        }
        grad.apply(&mut self.emb, self.cfg.learning_rate);
        Ok(loss)
    }

    fn parallel_gradients(&mut self, batch: &[Triple]) -> Result<(BatchLoss, SparseGradient)> {
        const CHUNKS: usize = 8;
        let base_seed: u64 = rand::Rng::gen(self.sampler.rng_mut());
        let chunk = batch.len().div_ceil(CHUNKS).max(1);
        // Parts: gradients of disjoint triple subsets against one snapshot.
        let parts: Vec<Result<(BatchLoss, SparseGradient)>> = batch
            .par_chunks(chunk)
            .enumerate()
            .map(|(i, part)| {
                let mut sampler = NegativeSampler::new(
                    base_seed.wrapping_add(i as u64),
                    self.cfg.negative_attempts,
                );
                loss_and_gradients(part, self.ctx, &self.emb, &self.cfg, &mut sampler)
            })
            .collect();
        let mut loss = BatchLoss::default();
        let mut grad = SparseGradient::default();
        for part in parts {
            let (l, g) = part?;
            loss.add(&l);
            grad.merge(&g);
        }
        Ok((loss, grad))
    }

    /// Shuffles the train triples, splits them into `batches` batches and steps through each.
    pub fn run_epoch(&mut self) -> Result<EpochLoss> {
        self.sampler.shuffle(&mut self.order);
        let n = self.order.len();
        let size = n.div_ceil(self.cfg.batches).max(1);
        let mut total = BatchLoss::default();
        let mut batch = Vec::with_capacity(size);
        for (b, chunk) in self.order.clone().chunks(size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| self.ctx.kg.train()[i]));
            let loss = self.step(&batch).map_err(|e| match e {
                Error::Divergence { epoch, loss, .. } => Error::Divergence {
                    epoch,
                    batch: b,
                    loss,
                },
                other => other,
            })?;
            total.add(&loss);
        }
        let record = EpochLoss {
            epoch: self.epoch,
            loss: total,
        };
        self.history.push(record);
        self.epoch += 1;
        Ok(record)
    }

    pub fn run(&mut self) -> Result<()> {
        while self.epoch < self.cfg.epochs {
            let record = self.run_epoch()?;
            log::debug!("epoch {} loss {:.4}", record.epoch, record.loss.total());
        }
        Ok(())
    }
}

/// Trains from fresh embeddings for `cfg.epochs` epochs.
pub fn train(ctx: TrainContext<'_>, cfg: &TrainingConfig) -> Result<(EmbeddingTable, Vec<EpochLoss>)> {
    let mut trainer = Trainer::new(ctx, cfg.clone())?;
    trainer.run()?;
    let history = trainer.history.clone();
    Ok((trainer.into_embeddings(), history))
}
