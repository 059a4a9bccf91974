//! Horn rule parsing, chain encoding and indexing.
//!
//! Rules arrive either in the normalized text format
//!
//! ```text
//! head(a,b) <= body1(a,e) & body2(e,b)<TAB>0.87
//! ```
//!
//! or as an AMIE+ TSV export. Length-2 rules are rewritten so that their body
//! reads as a directed chain `a -> e -> b`, flipping atoms into inverse
//! relations where needed; length-1 rules become `head <= body` or
//! `head <= inv(body)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, RelationId};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    A,
    B,
    E,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Var::A => "a",
            Var::B => "b",
            Var::E => "e",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub relation: RelationId,
    pub args: (Var, Var),
}

impl Atom {
    pub fn new(relation: RelationId, x: Var, y: Var) -> Self {
        Atom {
            relation,
            args: (x, y),
        }
    }
}

/// A rule as mined, before chain encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRule {
    pub head: Atom,
    pub body: Vec<Atom>,
    pub confidence: f64,
}

/// A rule in chain form: `head <= (body[0], body[1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRule {
    pub head: RelationId,
    pub body: Vec<RelationId>,
    pub confidence: f64,
}

impl ChainRule {
    pub fn len(&self) -> usize {
        self.body.len()
    }

    pub fn is_empty(&self) -> bool {
        self.body.is_empty()
    }

    /// Renders the rule in the normalized text format, body as a chain.
    pub fn to_line(&self, kg: &KnowledgeGraph) -> String {
        let body = match self.body.as_slice() {
            [r] => format!("{}(a,b)", kg.relation_name(*r)),
            [r1, r2] => format!(
                "{}(a,e) & {}(e,b)",
                kg.relation_name(*r1),
                kg.relation_name(*r2)
            ),
            _ => unreachable!("chain rules have one or two body relations"),
        };
        format!("{}(a,b) <= {body}\t{}", kg.relation_name(self.head), self.confidence)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleFormat {
    Normalized,
    Amie,
}

impl std::str::FromStr for RuleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(RuleFormat::Normalized),
            "amie" => Ok(RuleFormat::Amie),
            other => Err(Error::Config(format!("unknown rule format {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParsedRules {
    pub rules: Vec<RawRule>,
    /// Rules referring to relations that the graph does not contain.
    pub dropped_unknown: usize,
}

pub fn parse_rules(path: &Path, format: RuleFormat, kg: &KnowledgeGraph) -> Result<ParsedRules> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_rules_str(&text, path, format, kg)
}

pub fn parse_rules_str(
    text: &str,
    source: &Path,
    format: RuleFormat,
    kg: &KnowledgeGraph,
) -> Result<ParsedRules> {
    let mut parsed = ParsedRules::default();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let symbolic = match format {
            RuleFormat::Normalized => parse_normalized_line(line),
            RuleFormat::Amie => parse_amie_line(line),
        }
        .map_err(|msg| Error::parse(source, lineno, msg))?;
        let Some(rule) = symbolic else { continue };
        if !(0.0..=1.0).contains(&rule.confidence) {
            return Err(Error::InvalidInput(format!(
                "{}:{lineno}: confidence {} outside [0, 1]",
                source.display(),
                rule.confidence
            )));
        }
        match rule.resolve(kg) {
            Some(raw) => parsed.rules.push(raw),
            None => parsed.dropped_unknown += 1,
        }
    }
    if parsed.dropped_unknown > 0 {
        log::warn!(
            "{}: dropped {} rules over relations absent from the graph",
            source.display(),
            parsed.dropped_unknown
        );
    }
    Ok(parsed)
}

struct SymbolicAtom {
    relation: String,
    args: (Var, Var),
}

struct SymbolicRule {
    head: SymbolicAtom,
    body: Vec<SymbolicAtom>,
    confidence: f64,
}

impl SymbolicRule {
    fn resolve(&self, kg: &KnowledgeGraph) -> Option<RawRule> {
        let atom = |a: &SymbolicAtom| {
            kg.relation_id(&a.relation).map(|r| Atom {
                relation: r,
                args: a.args,
            })
        };
        Some(RawRule {
            head: atom(&self.head)?,
            body: self.body.iter().map(atom).collect::<Option<Vec<_>>>()?,
            confidence: self.confidence,
        })
    }
}

fn parse_var(token: &str) -> std::result::Result<Var, String> {
    match token.trim().trim_start_matches('?') {
        "a" => Ok(Var::A),
        "b" => Ok(Var::B),
        "e" => Ok(Var::E),
        other => Err(format!("unknown variable {other:?} (expected a, b or e)")),
    }
}

fn parse_atom(text: &str) -> std::result::Result<SymbolicAtom, String> {
    let text = text.trim();
    let open = text
        .rfind('(')
        .ok_or_else(|| format!("malformed atom {text:?}"))?;
    let inner = text[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| format!("malformed atom {text:?}"))?;
    let relation = text[..open].trim();
    if relation.is_empty() {
        return Err(format!("atom {text:?} has no relation"));
    }
    let (x, y) = inner
        .split_once(',')
        .ok_or_else(|| format!("atom {text:?} needs two arguments"))?;
    Ok(SymbolicAtom {
        relation: relation.to_owned(),
        args: (parse_var(x)?, parse_var(y)?),
    })
}

fn parse_normalized_line(line: &str) -> std::result::Result<Option<SymbolicRule>, String> {
    let line = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
    .trim();
    if line.is_empty() {
        return Ok(None);
    }
    let (rule, confidence) = line
        .rsplit_once(|c: char| c.is_whitespace())
        .ok_or("missing confidence")?;
    let confidence: f64 = confidence
        .parse()
        .map_err(|_| format!("bad confidence {confidence:?}"))?;
    let (head, body) = rule.split_once("<=").ok_or("missing '<='")?;
    let body = body
        .split('&')
        .map(parse_atom)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if body.is_empty() || body.len() > 2 {
        return Err(format!("rule body has {} atoms (expected 1 or 2)", body.len()));
    }
    Ok(Some(SymbolicRule {
        head: parse_atom(head)?,
        body,
        confidence,
    }))
}

/// AMIE+ rows look like `?a  r1  ?e  ?e  r2  ?b   => ?a  r3  ?b<TAB>hc<TAB>std<TAB>pca<TAB>...`.
/// Head variables map to `a` and `b`, one further variable maps to `e`.
const AMIE_PCA_COLUMN: usize = 3;

fn parse_amie_line<'a>(line: &'a str) -> std::result::Result<Option<SymbolicRule>, String> {
    if !line.contains("=>") {
        return Ok(None);
    }
    let columns: Vec<&str> = line.split('\t').collect();
    if columns.len() <= AMIE_PCA_COLUMN {
        return Err(format!(
            "expected at least {} tab-separated columns, found {}",
            AMIE_PCA_COLUMN + 1,
            columns.len()
        ));
    }
    let confidence: f64 = columns[AMIE_PCA_COLUMN]
        .trim()
        .parse()
        .map_err(|_| format!("bad PCA confidence {:?}", columns[AMIE_PCA_COLUMN]))?;
    let (body, head) = columns[0].split_once("=>").expect("checked above");
    let head: Vec<&str> = head.split_whitespace().collect();
    let body: Vec<&str> = body.split_whitespace().collect();
    if head.len() != 3 {
        return Err("rule head must be a single atom".into());
    }
    if body.is_empty() || !body.len().is_multiple_of(3) || body.len() / 3 > 2 {
        return Err("rule body must hold 1 or 2 atoms".into());
    }

    let (head_a, head_b) = (head[0], head[2]);
    let mut extra: Option<&str> = None;
    let mut var = |name: &'a str| -> std::result::Result<Var, String> {
        if name == head_a {
            Ok(Var::A)
        } else if name == head_b {
            Ok(Var::B)
        } else if extra.is_none() || extra == Some(name) {
            extra = Some(name);
            Ok(Var::E)
        } else {
            Err(format!("too many variables ({name})"))
        }
    };
    let head = SymbolicAtom {
        relation: head[1].to_owned(),
        args: (var(head[0])?, var(head[2])?),
    };
    let mut atoms = Vec::with_capacity(2);
    for chunk in body.chunks(3) {
        atoms.push(SymbolicAtom {
            relation: chunk[1].to_owned(),
            args: (var(chunk[0])?, var(chunk[2])?),
        });
    }
    Ok(Some(SymbolicRule {
        head,
        body: atoms,
        confidence,
    }))
}

/// Rewrites a rule in chain form, or returns `None` when no conversion
/// mode applies (repeated or dangling variables, head not over `(a, b)`).
pub fn encode_rule(kg: &KnowledgeGraph, rule: &RawRule) -> Option<ChainRule> {
    if rule.head.args != (Var::A, Var::B) {
        return None;
    }
    let body = match rule.body.as_slice() {
        [atom] => {
            let r = match atom.args {
                (Var::A, Var::B) => atom.relation,
                (Var::B, Var::A) => kg.inverse(atom.relation),
                _ => return None,
            };
            if r == rule.head.relation {
                return None;
            }
            vec![r]
        }
        [x, y] => {
            let (first, second) = chain_pair(kg, x, y).or_else(|| chain_pair(kg, y, x))?;
            vec![first, second]
        }
        _ => return None,
    };
    Some(ChainRule {
        head: rule.head.relation,
        body,
        confidence: rule.confidence,
    })
}

/// `first` must link `a` with `e`, `second` must link `e` with `b`.
fn chain_pair(kg: &KnowledgeGraph, first: &Atom, second: &Atom) -> Option<(RelationId, RelationId)> {
    let r1 = match first.args {
        (Var::A, Var::E) => first.relation,
        (Var::E, Var::A) => kg.inverse(first.relation),
        _ => return None,
    };
    let r2 = match second.args {
        (Var::E, Var::B) => second.relation,
        (Var::B, Var::E) => kg.inverse(second.relation),
        _ => return None,
    };
    Some((r1, r2))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EncodeStats {
    pub parsed: usize,
    pub dropped_unknown: usize,
    pub rejected: usize,
    pub below_threshold: usize,
    pub r1_kept: usize,
    pub r2_kept: usize,
}

/// Encodes every parsed rule, counting the ones no conversion mode accepts.
pub fn encode_all(kg: &KnowledgeGraph, parsed: &ParsedRules) -> (Vec<ChainRule>, usize) {
    let mut rejected = 0;
    let chains = parsed
        .rules
        .iter()
        .filter_map(|r| {
            let encoded = encode_rule(kg, r);
            if encoded.is_none() {
                rejected += 1;
            }
            encoded
        })
        .collect();
    (chains, rejected)
}

/// Threshold-filtered rules, indexed for composition and relation association.
#[derive(Clone, Debug, Default)]
pub struct RuleIndex {
    threshold: f64,
    r2: HashMap<(RelationId, RelationId), ChainRule>,
    r1: BTreeMap<RelationId, Vec<(RelationId, f64)>>,
    r1_rules: usize,
    r2_rules: usize,
    below_threshold: usize,
}

impl RuleIndex {
    /// Builds the index from encoded rules; rules with confidence below
    /// `threshold` are excluded.
    ///
    /// Length-1 rules are stored keyed by a base relation: `h <= inv(b)` is
    /// recorded as `inv(h) <= b`, which is the same implication read in the
    /// other direction.
    pub fn build(kg: &KnowledgeGraph, rules: &[ChainRule], threshold: f64) -> RuleIndex {
        let mut index = RuleIndex {
            threshold,
            ..RuleIndex::default()
        };
        let mut assoc: BTreeMap<RelationId, BTreeMap<RelationId, f64>> = BTreeMap::new();
        for rule in rules {
            if rule.confidence < threshold {
                index.below_threshold += 1;
                continue;
            }
            match *rule.body.as_slice() {
                [body] => {
                    index.r1_rules += 1;
                    let (key, deduced) = if kg.is_inverse(body) {
                        (kg.inverse(body), kg.inverse(rule.head))
                    } else {
                        (body, rule.head)
                    };
                    if key == deduced {
                        continue;
                    }
                    let beta = assoc.entry(key).or_default().entry(deduced).or_insert(0.0);
                    *beta = beta.max(rule.confidence);
                }
                [first, second] => {
                    index.r2_rules += 1;
                    match index.r2.get_mut(&(first, second)) {
                        Some(best) => {
                            let better = rule.confidence > best.confidence
                                || (rule.confidence == best.confidence && rule.head < best.head);
                            if better {
                                *best = rule.clone();
                            }
                        }
                        None => {
                            index.r2.insert((first, second), rule.clone());
                        }
                    }
                }
                _ => {}
            }
        }
        index.r1 = assoc
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect();
        index
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Best rule whose body is the chain `(first, second)`.
    pub fn compose(&self, first: RelationId, second: RelationId) -> Option<&ChainRule> {
        self.r2.get(&(first, second))
    }

    /// `D(r)`: relations deduced from base relation `r`, with confidences.
    pub fn deduced(&self, r: RelationId) -> &[(RelationId, f64)] {
        self.r1.get(&r).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn r2_rules(&self) -> impl Iterator<Item = &ChainRule> {
        self.r2.values()
    }

    pub fn r1_associations(&self) -> impl Iterator<Item = (RelationId, RelationId, f64)> + '_ {
        self.r1
            .iter()
            .flat_map(|(&k, v)| v.iter().map(move |&(d, beta)| (k, d, beta)))
    }

    pub fn num_r1_rules(&self) -> usize {
        self.r1_rules
    }

    pub fn num_r2_rules(&self) -> usize {
        self.r2_rules
    }

    pub fn num_below_threshold(&self) -> usize {
        self.below_threshold
    }

    pub fn is_empty(&self) -> bool {
        self.r1.is_empty() && self.r2.is_empty()
    }
}

/// Parses, encodes and indexes a rule file in one go.
pub fn load_rule_index(
    path: &Path,
    format: RuleFormat,
    kg: &KnowledgeGraph,
    threshold: f64,
) -> Result<(RuleIndex, Vec<ChainRule>, EncodeStats)> {
    let parsed = parse_rules(path, format, kg)?;
    Ok(index_parsed(kg, &parsed, threshold))
}

pub fn index_parsed(
    kg: &KnowledgeGraph,
    parsed: &ParsedRules,
    threshold: f64,
) -> (RuleIndex, Vec<ChainRule>, EncodeStats) {
    let (chains, rejected) = encode_all(kg, parsed);
    let index = RuleIndex::build(kg, &chains, threshold);
    let stats = EncodeStats {
        parsed: parsed.rules.len(),
        dropped_unknown: parsed.dropped_unknown,
        rejected,
        below_threshold: index.num_below_threshold(),
        r1_kept: index.num_r1_rules(),
        r2_kept: index.num_r2_rules(),
    };
    (index, chains, stats)
}
