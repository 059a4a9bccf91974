//! Triple storage, symbol interning and graph indexes.
//!
//! Every base relation `r` gets a derived inverse `inv(r)`. Base relations
//! occupy ids `0..n`, inverses occupy `n..2n`. Inverses are views only: they
//! never appear in a split, but every train triple `(h, r, t)` contributes the
//! adjacency edges `h -r-> t` and `t -inv(r)-> h`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Suffix marking an inverse relation in symbolic form.
pub const INVERSE_SUFFIX: &str = "^-1";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Bijective symbol <-> dense id mapping.
#[derive(Clone, Debug, Default)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn intern(&mut self, symbol: &str) -> u32 {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(symbol.to_owned());
        self.index.insert(symbol.to_owned(), id);
        id
    }

    pub fn get(&self, symbol: &str) -> Option<u32> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Writes `symbol<TAB>id` lines.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut out = BufWriter::new(file);
        for (id, symbol) in self.symbols.iter().enumerate() {
            writeln!(out, "{symbol}\t{id}").map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        out.flush().map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_from(path: &Path) -> Result<Vocab> {
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.is_empty() {
                continue;
            }
            let (symbol, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(path, lineno + 1, "expected symbol<TAB>id"))?;
            let id: u32 = id
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, format!("bad id {id:?}")))?;
            entries.push((id, symbol.to_owned()));
        }
        entries.sort();
        let mut vocab = Vocab::default();
        for (expected, (id, symbol)) in entries.into_iter().enumerate() {
            if id as usize != expected {
                return Err(Error::InvalidInput(format!(
                    "{}: ids are not contiguous (expected {expected}, found {id})",
                    path.display()
                )));
            }
            vocab.intern(&symbol);
        }
        Ok(vocab)
    }
}

/// A symbolic triple as read from disk.
pub type SymbolicTriple = (String, String, String);

/// Immutable knowledge graph with train/valid/test splits.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    adjacency: Vec<Vec<(RelationId, EntityId)>>,
    train_set: HashSet<Triple>,
    known: HashSet<Triple>,
    hash: String,
}

impl KnowledgeGraph {
    /// Loads three `head<TAB>relation<TAB>tail` files.
    pub fn load(train: &Path, valid: &Path, test: &Path) -> Result<KnowledgeGraph> {
        let train = read_triples(train)?;
        let valid = read_triples(valid)?;
        let test = read_triples(test)?;
        KnowledgeGraph::from_symbolic(&train, &valid, &test)
    }

    pub fn from_symbolic(
        train: &[SymbolicTriple],
        valid: &[SymbolicTriple],
        test: &[SymbolicTriple],
    ) -> Result<KnowledgeGraph> {
        if train.is_empty() {
            return Err(Error::InvalidInput("train split is empty".into()));
        }
        let mut entities = Vocab::default();
        let mut relations = Vocab::default();
        let mut hasher = Sha256::new();

        let mut intern_split = |name: &str, rows: &[SymbolicTriple]| {
            hasher.update(name.as_bytes());
            hasher.update(b"\n");
            let mut seen = HashSet::with_capacity(rows.len());
            let mut out = Vec::with_capacity(rows.len());
            for (h, r, t) in rows {
                let triple = Triple::new(
                    EntityId(entities.intern(h)),
                    RelationId(relations.intern(r)),
                    EntityId(entities.intern(t)),
                );
                if seen.insert(triple) {
                    hasher.update(h.as_bytes());
                    hasher.update(b"\t");
                    hasher.update(r.as_bytes());
                    hasher.update(b"\t");
                    hasher.update(t.as_bytes());
                    hasher.update(b"\n");
                    out.push(triple);
                }
            }
            if out.len() != rows.len() {
                log::warn!("{name}: dropped {} duplicate triples", rows.len() - out.len());
            }
            out
        };

        let train = intern_split("train", train);
        let valid = intern_split("valid", valid);
        let test = intern_split("test", test);
        let hash = hex::encode(hasher.finalize());

        let n_base = relations.len() as u32;
        let mut adjacency = vec![Vec::new(); entities.len()];
        for t in &train {
            adjacency[t.head.index()].push((t.relation, t.tail));
            adjacency[t.tail.index()].push((RelationId(t.relation.0 + n_base), t.head));
        }
        for edges in &mut adjacency {
            edges.sort_unstable();
        }

        let train_set: HashSet<Triple> = train.iter().copied().collect();
        let known: HashSet<Triple> = train.iter().chain(&valid).chain(&test).copied().collect();

        Ok(KnowledgeGraph {
            entities,
            relations,
            train,
            valid,
            test,
            adjacency,
            train_set,
            known,
            hash,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Number of relations as they appear in the data (inverses excluded).
    pub fn num_base_relations(&self) -> usize {
        self.relations.len()
    }

    /// Base relations plus their inverses.
    pub fn num_relations(&self) -> usize {
        2 * self.relations.len()
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn base_relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        (0..self.relations.len() as u32).map(RelationId)
    }

    pub fn inverse(&self, r: RelationId) -> RelationId {
        let n = self.relations.len() as u32;
        debug_assert!(r.0 < 2 * n);
        if r.0 < n {
            RelationId(r.0 + n)
        } else {
            RelationId(r.0 - n)
        }
    }

    pub fn is_inverse(&self, r: RelationId) -> bool {
        r.0 as usize >= self.relations.len()
    }

    /// Splits a relation id into its base relation and whether it is inverted.
    pub fn base_of(&self, r: RelationId) -> (RelationId, bool) {
        if self.is_inverse(r) {
            (self.inverse(r), true)
        } else {
            (r, false)
        }
    }

    pub fn entity_id(&self, symbol: &str) -> Option<EntityId> {
        self.entities.get(symbol).map(EntityId)
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        self.entities.symbol(e.0).unwrap_or("<unknown>")
    }

    /// Resolves a relation symbol; a trailing `^-1` selects the inverse.
    pub fn relation_id(&self, symbol: &str) -> Option<RelationId> {
        match symbol.strip_suffix(INVERSE_SUFFIX) {
            Some(base) => self
                .relations
                .get(base)
                .map(|r| self.inverse(RelationId(r))),
            None => self.relations.get(symbol).map(RelationId),
        }
    }

    pub fn relation_name(&self, r: RelationId) -> String {
        let (base, inverted) = self.base_of(r);
        let name = self.relations.symbol(base.0).unwrap_or("<unknown>");
        if inverted {
            format!("{name}{INVERSE_SUFFIX}")
        } else {
            name.to_owned()
        }
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    /// Outgoing train edges of `e`, inverse edges included, sorted by
    /// relation id then neighbour id.
    pub fn adjacency(&self, e: EntityId) -> Result<&[(RelationId, EntityId)]> {
        self.adjacency
            .get(e.index())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(format!("entity id {} is not interned", e.0)))
    }

    /// Same as [`adjacency`](Self::adjacency), empty for unknown ids.
    pub fn neighbours(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.adjacency.get(e.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Neighbours of `e` reachable through relation `r`.
    pub fn successors(&self, e: EntityId, r: RelationId) -> &[(RelationId, EntityId)] {
        let edges = self.neighbours(e);
        let lo = edges.partition_point(|&(rel, _)| rel < r);
        let hi = lo + edges[lo..].partition_point(|&(rel, _)| rel == r);
        &edges[lo..hi]
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Canonical base-relation form of a triple that may use an inverse id.
    pub fn canonical(&self, t: Triple) -> Triple {
        if self.is_inverse(t.relation) {
            Triple::new(t.tail, self.inverse(t.relation), t.head)
        } else {
            t
        }
    }

    /// Membership in train ∪ valid ∪ test; inverse views count through their base form.
    pub fn is_known(&self, t: Triple) -> bool {
        self.known.contains(&self.canonical(t))
    }

    pub fn in_train(&self, t: Triple) -> bool {
        self.train_set.contains(&self.canonical(t))
    }

    /// Hex SHA-256 over the symbolic contents of all splits.
    pub fn dataset_hash(&self) -> &str {
        &self.hash
    }

    pub fn symbolic(&self, t: Triple) -> SymbolicTriple {
        let t = self.canonical(t);
        (
            self.entity_name(t.head).to_owned(),
            self.relation_name(t.relation),
            self.entity_name(t.tail).to_owned(),
        )
    }

    pub fn dump_split(&self, split: Split, path: &Path) -> Result<()> {
        let rows: Vec<SymbolicTriple> = self.split(split).iter().map(|&t| self.symbolic(t)).collect();
        write_triples(path, &rows)
    }

    /// Writes `entities.dict` and `relations.dict` into `dir`.
    pub fn write_dictionaries(&self, dir: &Path) -> Result<()> {
        self.entities.write_to(&dir.join("entities.dict"))?;
        self.relations.write_to(&dir.join("relations.dict"))
    }
}

pub fn read_triples(path: &Path) -> Result<Vec<SymbolicTriple>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            [h, r, t] if !h.is_empty() && !r.is_empty() && !t.is_empty() => {
                rows.push((h.to_string(), r.to_string(), t.to_string()))
            }
            _ => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ))
            }
        }
    }
    Ok(rows)
}

pub fn write_triples(path: &Path, rows: &[SymbolicTriple]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    for (h, r, t) in rows {
        writeln!(out, "{h}\t{r}\t{t}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    out.flush().map_err(|e| Error::io(path.display().to_string(), e))
}
