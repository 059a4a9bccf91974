use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::paths::{write_str, ByteReader};
use crate::train::embedding::EmbeddingTable;
use crate::train::EpochLoss;

const MAGIC: &[u8; 8] = b"KGEMBCK1";

/// Trained embeddings plus the identity of the data and config they came from.
///
/// Layout (little endian): magic, `dim: u64`, `entities: u64`,
/// `relations: u64`, dataset hash and config digest as length-prefixed
/// strings, then the entity and base-relation matrices row-major as `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub embeddings: EmbeddingTable,
    pub dataset_hash: String,
    pub config_digest: String,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let ctx = || path.display().to_string();
        let emb = &self.embeddings;
        let mut buf = Vec::with_capacity(
            64 + 8 * (emb.entity_data().len() + emb.relation_data().len()),
        );
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(emb.dim() as u64).to_le_bytes());
        buf.extend_from_slice(&(emb.num_entities() as u64).to_le_bytes());
        buf.extend_from_slice(&(emb.num_base_relations() as u64).to_le_bytes());
        write_str(&mut buf, &self.dataset_hash);
        write_str(&mut buf, &self.config_digest);
        for v in emb.entity_data().iter().chain(emb.relation_data()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
        out.write_all(&buf).map_err(|e| Error::io(ctx(), e))?;
        out.flush().map_err(|e| Error::io(ctx(), e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut rd = ByteReader::new(&bytes, path);
        if rd.take(MAGIC.len())? != MAGIC {
            return Err(Error::Incompatible(format!(
                "{}: not an embedding checkpoint",
                path.display()
            )));
        }
        let dim = rd.u64()? as usize;
        let n_entities = rd.u64()? as usize;
        let n_relations = rd.u64()? as usize;
        let dataset_hash = rd.string()?;
        let config_digest = rd.string()?;
        let mut read_matrix =
            |rows: usize| (0..rows * dim).map(|_| rd.f64()).collect::<Result<Vec<f64>>>();
        let entities = read_matrix(n_entities)?;
        let relations = read_matrix(n_relations)?;
        if !rd.is_at_end() {
            return Err(Error::Incompatible(format!("{}: trailing bytes", path.display())));
        }
        Ok(Checkpoint {
            embeddings: EmbeddingTable::from_flat(dim, n_entities, n_relations, entities, relations),
            dataset_hash,
            config_digest,
        })
    }

    pub fn check_compatible(&self, kg: &KnowledgeGraph) -> Result<()> {
        if self.dataset_hash != kg.dataset_hash() {
            return Err(Error::Incompatible(format!(
                "checkpoint was trained on dataset {}, current dataset is {}",
                self.dataset_hash,
                kg.dataset_hash()
            )));
        }
        if self.embeddings.num_entities() != kg.num_entities()
            || self.embeddings.num_base_relations() != kg.num_base_relations()
        {
            return Err(Error::Incompatible("checkpoint shape does not match dataset".into()));
        }
        Ok(())
    }
}

/// `epoch,total,l1,l2,l3` with weighted per-term contributions.
pub fn write_loss_csv(path: &Path, history: &[EpochLoss]) -> Result<()> {
    let ctx = || path.display().to_string();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "epoch,total,l1,l2,l3")?;
        for h in history {
            writeln!(
                out,
                "{},{},{},{},{}",
                h.epoch,
                h.loss.total(),
                h.loss.triple,
                h.loss.path,
                h.loss.relation
            )?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(ctx(), e))
}
