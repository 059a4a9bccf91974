//! Link-prediction scoring, ranking and metrics.
//!
//! Candidates are ranked by ascending score (lower energy is better). Ties
//! are pessimistic: every other candidate scoring at most the true one's
//! score is ranked ahead of it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::Serialize;

use crate::compose::{AppliedRule, ComposedPaths};
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::rules::RuleIndex;
use crate::train::{energy_composed_path, energy_triple, EmbeddingTable, Norm};

pub const HITS_AT: [usize; 3] = [1, 3, 10];

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Task {
    EntityHead,
    EntityTail,
    EntityCombined,
    Relation,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::EntityHead => "entity-head",
            Task::EntityTail => "entity-tail",
            Task::EntityCombined => "entity-combined",
            Task::Relation => "relation",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Setting {
    Raw,
    Filtered,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Raw => "raw",
            Setting::Filtered => "filtered",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Slot {
    Head,
    Tail,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RelationCategory {
    OneToOne,
    OneToMany,
    ManyToOne,
    ManyToMany,
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationCategory::OneToOne => "1-1",
            RelationCategory::OneToMany => "1-N",
            RelationCategory::ManyToOne => "N-1",
            RelationCategory::ManyToMany => "N-N",
        })
    }
}

pub const CATEGORY_THRESHOLD: f64 = 1.5;

impl RelationCategory {
    /// `tph`: average tails per head, `hpt`: average heads per tail.
    pub fn from_stats(tph: f64, hpt: f64) -> Self {
        match (tph < CATEGORY_THRESHOLD, hpt < CATEGORY_THRESHOLD) {
            (true, true) => RelationCategory::OneToOne,
            (false, true) => RelationCategory::OneToMany,
            (true, false) => RelationCategory::ManyToOne,
            (false, false) => RelationCategory::ManyToMany,
        }
    }
}

/// Category of every base relation from train statistics.
pub fn relation_categories(kg: &KnowledgeGraph) -> Vec<RelationCategory> {
    let n = kg.num_base_relations();
    let mut count = vec![0usize; n];
    let mut heads: Vec<HashSet<EntityId>> = vec![HashSet::new(); n];
    let mut tails: Vec<HashSet<EntityId>> = vec![HashSet::new(); n];
    for t in kg.train() {
        let r = t.relation.index();
        count[r] += 1;
        heads[r].insert(t.head);
        tails[r].insert(t.tail);
    }
    (0..n)
        .map(|r| {
            if count[r] == 0 {
                return RelationCategory::OneToOne;
            }
            let tph = count[r] as f64 / heads[r].len() as f64;
            let hpt = count[r] as f64 / tails[r].len() as f64;
            RelationCategory::from_stats(tph, hpt)
        })
        .collect()
}

/// Scores triples with the triple energy plus the weighted path energies of
/// every path linking the pair.
#[derive(Copy, Clone)]
pub struct Scorer<'a> {
    pub embeddings: &'a EmbeddingTable,
    pub paths: &'a ComposedPaths,
    pub norm: Norm,
    pub alpha_path: f64,
}

impl<'a> Scorer<'a> {
    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let mut q = energy_triple(self.embeddings, self.norm, h, r, t);
        if self.alpha_path != 0.0 {
            let paths = self.paths.get(h, t);
            if !paths.is_empty() {
                let sum: f64 = paths
                    .iter()
                    .map(|p| energy_composed_path(self.embeddings, self.norm, p, r))
                    .sum();
                q += self.alpha_path * sum;
            }
        }
        q
    }

    pub fn path_term(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        self.paths
            .get(h, t)
            .iter()
            .map(|p| energy_composed_path(self.embeddings, self.norm, p, r))
            .sum()
    }
}

pub fn score(scorer: &Scorer<'_>, h: EntityId, r: RelationId, t: EntityId) -> f64 {
    scorer.score(h, r, t)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Ranks {
    pub raw: usize,
    pub filtered: usize,
}

impl Ranks {
    pub fn get(&self, setting: Setting) -> usize {
        match setting {
            Setting::Raw => self.raw,
            Setting::Filtered => self.filtered,
        }
    }
}

fn rank_candidates(
    truth: f64,
    candidates: impl Iterator<Item = (f64, bool)>,
) -> Ranks {
    let mut ranks = Ranks { raw: 1, filtered: 1 };
    for (s, known) in candidates {
        if s <= truth {
            ranks.raw += 1;
            if !known {
                ranks.filtered += 1;
            }
        }
    }
    ranks
}

/// Raw and filtered rank of the true entity in `slot`.
pub fn entity_ranks(scorer: &Scorer<'_>, kg: &KnowledgeGraph, triple: Triple, slot: Slot) -> Ranks {
    let truth = scorer.score(triple.head, triple.relation, triple.tail);
    let n = kg.num_entities() as u32;
    let candidates = (0..n).map(EntityId).filter_map(|e| {
        let cand = match slot {
            Slot::Head => Triple::new(e, triple.relation, triple.tail),
            Slot::Tail => Triple::new(triple.head, triple.relation, e),
        };
        (cand != triple).then(|| (scorer.score(cand.head, cand.relation, cand.tail), kg.is_known(cand)))
    });
    rank_candidates(truth, candidates)
}

pub fn rank_entities(
    scorer: &Scorer<'_>,
    kg: &KnowledgeGraph,
    triple: Triple,
    slot: Slot,
    setting: Setting,
) -> usize {
    entity_ranks(scorer, kg, triple, slot).get(setting)
}

/// Raw and filtered rank of the true relation among all base relations.
pub fn relation_ranks(scorer: &Scorer<'_>, kg: &KnowledgeGraph, triple: Triple) -> Ranks {
    let truth = scorer.score(triple.head, triple.relation, triple.tail);
    let candidates = kg.base_relations().filter_map(|r| {
        let cand = Triple::new(triple.head, r, triple.tail);
        (cand != triple).then(|| (scorer.score(cand.head, r, cand.tail), kg.is_known(cand)))
    });
    rank_candidates(truth, candidates)
}

pub fn rank_relations(scorer: &Scorer<'_>, kg: &KnowledgeGraph, triple: Triple, setting: Setting) -> usize {
    relation_ranks(scorer, kg, triple).get(setting)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub count: usize,
    pub mr: f64,
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
}

pub fn metrics_from_ranks(ranks: &[usize]) -> Metrics {
    let n = ranks.len() as f64;
    let mut hits = BTreeMap::new();
    for k in HITS_AT {
        hits.insert(k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n);
    }
    Metrics {
        count: ranks.len(),
        mr: ranks.iter().map(|&r| r as f64).sum::<f64>() / n,
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        hits,
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct CategoryHits {
    pub head: f64,
    pub tail: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: Task,
    pub setting: Setting,
    pub metrics: Metrics,
    /// Hits@10 per relation category; entity tasks only.
    pub per_category: BTreeMap<RelationCategory, CategoryHits>,
}

impl EvalReport {
    pub fn hits(&self, k: usize) -> f64 {
        self.metrics.hits.get(&k).copied().unwrap_or(f64::NAN)
    }
}

/// Ranks every triple in `triples` for head, tail and relation prediction.
pub fn evaluate(scorer: &Scorer<'_>, kg: &KnowledgeGraph, triples: &[Triple]) -> Result<Vec<EvalReport>> {
    if triples.is_empty() {
        return Err(Error::InvalidInput("no test triples to evaluate".into()));
    }
    let per_triple: Vec<(Ranks, Ranks, Ranks)> = triples
        .par_iter()
        .map(|&t| {
            (
                entity_ranks(scorer, kg, t, Slot::Head),
                entity_ranks(scorer, kg, t, Slot::Tail),
                relation_ranks(scorer, kg, t),
            )
        })
        .collect();
    let categories = relation_categories(kg);

    let mut reports = Vec::new();
    for setting in [Setting::Raw, Setting::Filtered] {
        let head: Vec<usize> = per_triple.iter().map(|r| r.0.get(setting)).collect();
        let tail: Vec<usize> = per_triple.iter().map(|r| r.1.get(setting)).collect();
        let rel: Vec<usize> = per_triple.iter().map(|r| r.2.get(setting)).collect();
        let combined: Vec<usize> = head.iter().chain(&tail).copied().collect();

        let mut grouped: BTreeMap<RelationCategory, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for (i, t) in triples.iter().enumerate() {
            let cat = categories[t.relation.index()];
            let entry = grouped.entry(cat).or_default();
            entry.0.push(head[i]);
            entry.1.push(tail[i]);
        }
        let per_category: BTreeMap<_, _> = grouped
            .into_iter()
            .map(|(cat, (h, t))| {
                let at10 = |v: &[usize]| v.iter().filter(|&&r| r <= 10).count() as f64 / v.len() as f64;
                (
                    cat,
                    CategoryHits {
                        head: at10(&h),
                        tail: at10(&t),
                        count: h.len(),
                    },
                )
            })
            .collect();

        for (task, ranks) in [
            (Task::EntityHead, &head),
            (Task::EntityTail, &tail),
            (Task::EntityCombined, &combined),
            (Task::Relation, &rel),
        ] {
            reports.push(EvalReport {
                task,
                setting,
                metrics: metrics_from_ranks(ranks),
                per_category: if task == Task::Relation {
                    BTreeMap::new()
                } else {
                    per_category.clone()
                },
            });
        }
    }
    Ok(reports)
}

pub fn find_report(reports: &[EvalReport], task: Task, setting: Setting) -> Option<&EvalReport> {
    reports.iter().find(|r| r.task == task && r.setting == setting)
}

/// `task,setting,metric,value` rows.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("task,setting,metric,value\n");
    for r in reports {
        let m = &r.metrics;
        let _ = writeln!(out, "{},{},MR,{}", r.task, r.setting, m.mr);
        let _ = writeln!(out, "{},{},MRR,{}", r.task, r.setting, m.mrr);
        for (k, v) in &m.hits {
            let _ = writeln!(out, "{},{},Hits@{k},{v}", r.task, r.setting);
        }
        for (cat, h) in &r.per_category {
            if r.task == Task::EntityHead {
                let _ = writeln!(out, "{},{},Hits@10[{cat}],{}", r.task, r.setting, h.head);
            } else if r.task == Task::EntityTail {
                let _ = writeln!(out, "{},{},Hits@10[{cat}],{}", r.task, r.setting, h.tail);
            }
        }
    }
    out
}

pub fn reports_to_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:<9} {:>10} {:>8} {:>8} {:>8} {:>8}",
        "task", "setting", "MR", "MRR", "Hits@1", "Hits@3", "Hits@10"
    );
    for r in reports {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{:<16} {:<9} {:>10.2} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.task.to_string(),
            r.setting.to_string(),
            m.mr,
            m.mrr,
            r.hits(1),
            r.hits(3),
            r.hits(10)
        );
    }
    if let Some(r) = reports
        .iter()
        .find(|r| r.task == Task::EntityCombined && r.setting == Setting::Filtered)
    {
        if !r.per_category.is_empty() {
            let _ = writeln!(out, "\nfiltered Hits@10 by relation category");
            let _ = writeln!(out, "{:<9} {:>6} {:>8} {:>8}", "category", "count", "head", "tail");
            for (cat, h) in &r.per_category {
                let _ = writeln!(
                    out,
                    "{:<9} {:>6} {:>8.4} {:>8.4}",
                    cat.to_string(),
                    h.count,
                    h.head,
                    h.tail
                );
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathEvidence {
    pub relations: Vec<RelationId>,
    pub reliability: f64,
    pub applied: Vec<AppliedRule>,
    pub confidence_product: f64,
    pub residual: Vec<RelationId>,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub relation: RelationId,
    pub score: f64,
    pub triple_energy: f64,
    pub paths: Vec<PathEvidence>,
    /// Length-1 rule links `(from, to, confidence)` touching the predicted
    /// relation or a composed path head.
    pub associations: Vec<(RelationId, RelationId, f64)>,
}

impl Explanation {
    pub fn triple_term_only(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Top `top_k` relations for `(h, ?, t)` with their supporting evidence.
pub fn explain(
    scorer: &Scorer<'_>,
    rules: &RuleIndex,
    kg: &KnowledgeGraph,
    h: EntityId,
    t: EntityId,
    top_k: usize,
) -> Vec<Explanation> {
    let mut scored: Vec<(f64, RelationId)> = kg
        .base_relations()
        .map(|r| (scorer.score(h, r, t), r))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(top_k);

    let links: Vec<(RelationId, RelationId, f64)> = rules.r1_associations().collect();
    scored
        .into_iter()
        .map(|(score, r)| {
            let paths: Vec<PathEvidence> = scorer
                .paths
                .get(h, t)
                .iter()
                .map(|p| PathEvidence {
                    relations: p.relations.clone(),
                    reliability: p.reliability,
                    applied: p.composition.applied.clone(),
                    confidence_product: p.composition.confidence_product(),
                    residual: p.composition.residual.clone(),
                    energy: energy_composed_path(scorer.embeddings, scorer.norm, p, r),
                })
                .collect();
            let mut touched: HashSet<RelationId> = HashSet::from([r]);
            for p in &paths {
                if let [single] = p.residual.as_slice() {
                    touched.insert(kg.base_of(*single).0);
                }
            }
            let mut seen = HashMap::new();
            for &(from, to, beta) in &links {
                if touched.contains(&from) || touched.contains(&kg.base_of(to).0) {
                    seen.entry((from, to)).or_insert(beta);
                }
            }
            let mut associations: Vec<_> = seen.into_iter().map(|((f, t), b)| (f, t, b)).collect();
            associations.sort_by_key(|a| (a.0, a.1));
            Explanation {
                relation: r,
                score,
                triple_energy: energy_triple(scorer.embeddings, scorer.norm, h, r, t),
                paths,
                associations,
            }
        })
        .collect()
}

fn seq(kg: &KnowledgeGraph, rels: &[RelationId]) -> String {
    rels.iter()
        .map(|&r| kg.relation_name(r))
        .collect::<Vec<_>>()
        .join(" -> ")
}

pub fn render_explanations(kg: &KnowledgeGraph, h: EntityId, t: EntityId, items: &[Explanation]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "({}, ?, {})", kg.entity_name(h), kg.entity_name(t));
    for (rank, ex) in items.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}. {}  score {:.4}  (triple term {:.4})",
            rank + 1,
            kg.relation_name(ex.relation),
            ex.score,
            ex.triple_energy
        );
        if ex.triple_term_only() {
            let _ = writeln!(out, "   triple term only: no supporting paths");
        }
        for p in &ex.paths {
            let _ = writeln!(
                out,
                "   path {}  reliability {:.4}",
                seq(kg, &p.relations),
                p.reliability
            );
            for rule in &p.applied {
                let _ = writeln!(
                    out,
                    "     rule {} <= ({}, {})  confidence {}",
                    kg.relation_name(rule.head),
                    kg.relation_name(rule.body.0),
                    kg.relation_name(rule.body.1),
                    rule.confidence
                );
            }
            let _ = writeln!(
                out,
                "     composed {}  confidence product {:.4}  energy {:.4}",
                seq(kg, &p.residual),
                p.confidence_product,
                p.energy
            );
        }
        for &(from, to, beta) in &ex.associations {
            let _ = writeln!(
                out,
                "   association {} => {}  confidence {}",
                kg.relation_name(from),
                kg.relation_name(to),
                beta
            );
        }
    }
    out
}

/// Tab-separated records: `prediction`, `path`, `rule`, `association` lines.
pub fn explanation_records(kg: &KnowledgeGraph, h: EntityId, t: EntityId, items: &[Explanation]) -> String {
    let mut out = String::new();
    let (hn, tn) = (kg.entity_name(h), kg.entity_name(t));
    for (rank, ex) in items.iter().enumerate() {
        let rel = kg.relation_name(ex.relation);
        let _ = writeln!(
            out,
            "prediction\t{hn}\t{tn}\t{}\t{rel}\t{}\t{}\t{}",
            rank + 1,
            ex.score,
            ex.triple_energy,
            if ex.triple_term_only() { "triple-only" } else { "paths" }
        );
        for (i, p) in ex.paths.iter().enumerate() {
            let _ = writeln!(
                out,
                "path\t{rel}\t{i}\t{}\t{}\t{}\t{}\t{}",
                p.relations.iter().map(|&r| kg.relation_name(r)).collect::<Vec<_>>().join(","),
                p.reliability,
                p.residual.iter().map(|&r| kg.relation_name(r)).collect::<Vec<_>>().join(","),
                p.confidence_product,
                p.energy
            );
            for rule in &p.applied {
                let _ = writeln!(
                    out,
                    "rule\t{rel}\t{i}\t{}\t{},{}\t{}",
                    kg.relation_name(rule.head),
                    kg.relation_name(rule.body.0),
                    kg.relation_name(rule.body.1),
                    rule.confidence
                );
            }
        }
        for &(from, to, beta) in &ex.associations {
            let _ = writeln!(
                out,
                "association\t{rel}\t{}\t{}\t{beta}",
                kg.relation_name(from),
                kg.relation_name(to)
            );
        }
    }
    out
}
