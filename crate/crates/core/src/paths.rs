//! Relation-path enumeration with path-constraint resource allocation.
//!
//! A path between `h` and `t` is a relation sequence of 2..=`max_steps` hops
//! along train edges (inverse edges included) visiting distinct entities.
//! Its reliability is the resource that reaches `t` when one unit starts at
//! `h` and, at each hop, every entity splits what it holds evenly among its
//! successors under that hop's relation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub relations: Vec<RelationId>,
    pub reliability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub max_steps: usize,
    /// Paths with reliability `<= cutoff` are discarded.
    pub cutoff: f64,
    /// Per entity pair, keep at most this many paths (highest reliability first).
    pub per_pair_cap: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            max_steps: 2,
            cutoff: 0.01,
            per_pair_cap: 200,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.max_steps) {
            return Err(Error::Config(format!(
                "max path steps must be 2 or 3, got {}",
                self.max_steps
            )));
        }
        if !(0.0..1.0).contains(&self.cutoff) && self.cutoff != 1.0 {
            return Err(Error::Config(format!(
                "reliability cutoff must lie in [0, 1], got {}",
                self.cutoff
            )));
        }
        Ok(())
    }
}

/// Resource distribution after following `relations` from `source`.
pub fn resource_allocation(
    kg: &KnowledgeGraph,
    source: EntityId,
    relations: &[RelationId],
) -> BTreeMap<EntityId, f64> {
    let mut frontier = BTreeMap::from([(source, 1.0)]);
    for &rel in relations {
        let mut next = BTreeMap::new();
        for (&entity, &resource) in &frontier {
            let succ = kg.successors(entity, rel);
            if succ.is_empty() {
                continue;
            }
            let share = resource / succ.len() as f64;
            for &(_, n) in succ {
                *next.entry(n).or_insert(0.0) += share;
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    frontier
}

fn sort_paths(paths: &mut [Path]) {
    paths.sort_by(|a, b| {
        b.reliability
            .total_cmp(&a.reliability)
            .then_with(|| a.relations.cmp(&b.relations))
    });
}

/// Enumerates simple relation sequences leaving `source`, grouped by endpoint.
fn walk(
    kg: &KnowledgeGraph,
    source: EntityId,
    max_steps: usize,
) -> BTreeMap<EntityId, BTreeSet<Vec<RelationId>>> {
    fn dfs(
        kg: &KnowledgeGraph,
        node: EntityId,
        max_steps: usize,
        visited: &mut Vec<EntityId>,
        rels: &mut Vec<RelationId>,
        out: &mut BTreeMap<EntityId, BTreeSet<Vec<RelationId>>>,
    ) {
        for &(rel, next) in kg.neighbours(node) {
            if visited.contains(&next) {
                continue;
            }
            rels.push(rel);
            if rels.len() >= 2 {
                out.entry(next).or_default().insert(rels.clone());
            }
            if rels.len() < max_steps {
                visited.push(next);
                dfs(kg, next, max_steps, visited, rels, out);
                visited.pop();
            }
            rels.pop();
        }
    }

    let mut out = BTreeMap::new();
    let mut visited = vec![source];
    let mut rels = Vec::with_capacity(max_steps);
    dfs(kg, source, max_steps, &mut visited, &mut rels, &mut out);
    out
}

/// Enumerates paths from and to single entities over a fixed graph.
pub struct PathExtractor<'a> {
    kg: &'a KnowledgeGraph,
    config: PathConfig,
}

impl<'a> PathExtractor<'a> {
    pub fn new(kg: &'a KnowledgeGraph, config: PathConfig) -> Result<Self> {
        config.validate()?;
        Ok(PathExtractor { kg, config })
    }

    pub fn config(&self) -> &PathConfig {
        &self.config
    }

    /// Paths from `source` to every entity accepted by `keep`.
    pub fn from_source(
        &self,
        source: EntityId,
        keep: impl Fn(EntityId) -> bool,
    ) -> Vec<(EntityId, Vec<Path>)> {
        let reachable = walk(self.kg, source, self.config.max_steps);
        let mut flows: HashMap<&[RelationId], BTreeMap<EntityId, f64>> = HashMap::new();
        let mut out = Vec::new();
        for (target, sequences) in &reachable {
            if !keep(*target) {
                continue;
            }
            let mut paths = Vec::new();
            for seq in sequences {
                let flow = flows
                    .entry(seq.as_slice())
                    .or_insert_with(|| resource_allocation(self.kg, source, seq));
                let reliability = flow.get(target).copied().unwrap_or(0.0);
                if reliability > self.config.cutoff {
                    paths.push(Path {
                        relations: seq.clone(),
                        reliability,
                    });
                }
            }
            if let Some(paths) = self.finish(paths) {
                out.push((*target, paths));
            }
        }
        out
    }

    /// Paths from every entity to `target`.
    pub fn to_target(&self, target: EntityId) -> Vec<(EntityId, Vec<Path>)> {
        let backwards = walk(self.kg, target, self.config.max_steps);
        let mut out = Vec::new();
        for (source, sequences) in backwards {
            let mut paths = Vec::new();
            for seq in sequences {
                let forward: Vec<RelationId> =
                    seq.iter().rev().map(|&r| self.kg.inverse(r)).collect();
                let reliability = resource_allocation(self.kg, source, &forward)
                    .get(&target)
                    .copied()
                    .unwrap_or(0.0);
                if reliability > self.config.cutoff {
                    paths.push(Path {
                        relations: forward,
                        reliability,
                    });
                }
            }
            if let Some(paths) = self.finish(paths) {
                out.push((source, paths));
            }
        }
        out
    }

    pub fn between(&self, source: EntityId, target: EntityId) -> Vec<Path> {
        self.from_source(source, |e| e == target)
            .into_iter()
            .next()
            .map(|(_, p)| p)
            .unwrap_or_default()
    }

    fn finish(&self, mut paths: Vec<Path>) -> Option<Vec<Path>> {
        if paths.is_empty() {
            return None;
        }
        sort_paths(&mut paths);
        paths.truncate(self.config.per_pair_cap);
        Some(paths)
    }
}

/// Paths per entity pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathSet {
    config: PathConfig,
    pairs: HashMap<(EntityId, EntityId), Vec<Path>>,
}

impl PathSet {
    pub fn empty(config: PathConfig) -> Self {
        PathSet {
            config,
            pairs: HashMap::new(),
        }
    }

    pub fn config(&self) -> &PathConfig {
        &self.config
    }

    pub fn get(&self, head: EntityId, tail: EntityId) -> &[Path] {
        self.pairs
            .get(&(head, tail))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn insert(&mut self, head: EntityId, tail: EntityId, mut paths: Vec<Path>) {
        sort_paths(&mut paths);
        if paths.is_empty() {
            self.pairs.remove(&(head, tail));
        } else {
            self.pairs.insert((head, tail), paths);
        }
    }

    pub fn contains_pair(&self, head: EntityId, tail: EntityId) -> bool {
        self.pairs.contains_key(&(head, tail))
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_paths(&self) -> usize {
        self.pairs.values().map(Vec::len).sum()
    }

    /// Pairs in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = ((EntityId, EntityId), &[Path])> {
        let mut keys: Vec<_> = self.pairs.keys().copied().collect();
        keys.sort_unstable();
        keys.into_iter().map(move |k| (k, self.pairs[&k].as_slice()))
    }

    /// Counts of kept paths per reliability decile `(0, 0.1], ..., (0.9, 1]`.
    pub fn reliability_histogram(&self) -> [usize; 10] {
        let mut hist = [0; 10];
        for path in self.pairs.values().flatten() {
            let bucket = ((path.reliability * 10.0).ceil() as usize).clamp(1, 10) - 1;
            hist[bucket] += 1;
        }
        hist
    }

    fn merge(&mut self, found: Vec<(EntityId, EntityId, Vec<Path>)>) {
        for (h, t, paths) in found {
            self.pairs.entry((h, t)).or_insert(paths);
        }
    }

    /// Writes the binary cache: header then one record per path, little endian.
    pub fn save(&self, path: &std::path::Path, dataset_hash: &str) -> Result<()> {
        let ctx = || path.display().to_string();
        let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
        let mut out = BufWriter::new(file);
        let mut buf = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        write_str(&mut buf, dataset_hash);
        buf.extend_from_slice(&(self.config.max_steps as u32).to_le_bytes());
        buf.extend_from_slice(&self.config.cutoff.to_le_bytes());
        buf.extend_from_slice(&(self.config.per_pair_cap as u64).to_le_bytes());
        buf.extend_from_slice(&(self.num_paths() as u64).to_le_bytes());
        for ((h, t), paths) in self.iter() {
            for p in paths {
                buf.extend_from_slice(&h.0.to_le_bytes());
                buf.extend_from_slice(&t.0.to_le_bytes());
                buf.push(p.relations.len() as u8);
                for r in &p.relations {
                    buf.extend_from_slice(&r.0.to_le_bytes());
                }
                buf.extend_from_slice(&p.reliability.to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(|e| Error::io(ctx(), e))?;
        out.flush().map_err(|e| Error::io(ctx(), e))
    }

    /// Reads a cache, rejecting it when it was built for another dataset or setting.
    pub fn load(
        path: &std::path::Path,
        dataset_hash: &str,
        expected: &PathConfig,
    ) -> Result<PathSet> {
        let ctx = || path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(ctx(), e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(ctx(), e))?;
        let mut rd = ByteReader::new(&bytes, path);
        if rd.take(CACHE_MAGIC.len())? != CACHE_MAGIC {
            return Err(Error::Incompatible(format!("{}: not a path cache", ctx())));
        }
        let hash = rd.string()?;
        let config = PathConfig {
            max_steps: rd.u32()? as usize,
            cutoff: rd.f64()?,
            per_pair_cap: rd.u64()? as usize,
        };
        if hash != dataset_hash {
            return Err(Error::Incompatible(format!(
                "{}: built for dataset {hash}, current dataset is {dataset_hash}",
                ctx()
            )));
        }
        if &config != expected {
            return Err(Error::Incompatible(format!(
                "{}: built with {config:?}, requested {expected:?}",
                ctx()
            )));
        }
        let n = rd.u64()? as usize;
        let mut grouped: HashMap<(EntityId, EntityId), Vec<Path>> = HashMap::new();
        for _ in 0..n {
            let h = EntityId(rd.u32()?);
            let t = EntityId(rd.u32()?);
            let len = rd.take(1)?[0] as usize;
            let relations = (0..len)
                .map(|_| rd.u32().map(RelationId))
                .collect::<Result<Vec<_>>>()?;
            let reliability = rd.f64()?;
            grouped.entry((h, t)).or_default().push(Path {
                relations,
                reliability,
            });
        }
        if !rd.is_at_end() {
            return Err(Error::Incompatible(format!("{}: trailing bytes", ctx())));
        }
        let mut set = PathSet::empty(config);
        for ((h, t), paths) in grouped {
            set.insert(h, t, paths);
        }
        Ok(set)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"KGPATHS1";

pub(crate) fn write_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    source: &'a std::path::Path,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], source: &'a std::path::Path) -> Self {
        ByteReader {
            bytes,
            pos: 0,
            source,
        }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Incompatible(format!(
                "{}: truncated at byte {}",
                self.source.display(),
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| {
            Error::Incompatible(format!("{}: invalid utf-8 in header", self.source.display()))
        })
    }

    pub(crate) fn is_at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Paths for every entity pair linked by a train triple.
pub fn extract_paths(kg: &KnowledgeGraph, config: &PathConfig) -> Result<PathSet> {
    let extractor = PathExtractor::new(kg, config.clone())?;
    let mut tails: BTreeMap<EntityId, HashSet<EntityId>> = BTreeMap::new();
    for t in kg.train() {
        tails.entry(t.head).or_default().insert(t.tail);
    }
    let heads: Vec<_> = tails.into_iter().collect();
    let found: Vec<_> = heads
        .par_iter()
        .flat_map_iter(|(h, targets)| {
            extractor
                .from_source(*h, |e| targets.contains(&e))
                .into_iter()
                .map(move |(t, p)| (*h, t, p))
        })
        .collect();
    let mut set = PathSet::empty(config.clone());
    set.merge(found);
    Ok(set)
}

/// Paths needed to score every candidate of the given queries: from each
/// query head to all entities and from all entities to each query tail.
pub fn extract_query_paths(
    kg: &KnowledgeGraph,
    config: &PathConfig,
    queries: &[Triple],
) -> Result<PathSet> {
    let extractor = PathExtractor::new(kg, config.clone())?;
    let heads: BTreeSet<EntityId> = queries.iter().map(|t| t.head).collect();
    let tails: BTreeSet<EntityId> = queries.iter().map(|t| t.tail).collect();
    let heads: Vec<_> = heads.into_iter().collect();
    let tails: Vec<_> = tails.into_iter().collect();

    let forward: Vec<_> = heads
        .par_iter()
        .flat_map_iter(|&h| {
            extractor
                .from_source(h, |_| true)
                .into_iter()
                .map(move |(t, p)| (h, t, p))
        })
        .collect();
    let backward: Vec<_> = tails
        .par_iter()
        .flat_map_iter(|&t| {
            extractor
                .to_target(t)
                .into_iter()
                .map(move |(h, p)| (h, t, p))
        })
        .collect();
    let mut set = PathSet::empty(config.clone());
    set.merge(forward);
    set.merge(backward);
    Ok(set)
}
