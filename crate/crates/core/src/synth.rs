//! Toy rule-governed knowledge graphs for tests and benchmarks.
//!
//! Three generations of people are linked by `father` and `mother` facts,
//! which always stay in train. Founder couples have children; one child of
//! each founder couple marries a child of another founder couple and has
//! children of its own, so every grandchild has four distinct grandparents
//! and no cousins. Derived facts
//! (grandparents and the inverse `father_of`/`mother_of` links) are computed
//! from the ground-truth family structure; a fixed fraction of them is moved
//! to test. The accompanying rule file holds rules that are true of the
//! world plus planted wrong rules of low confidence.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{write_triples, KnowledgeGraph, SymbolicTriple};

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub founder_couples: usize,
    /// Inclusive range of children per founder couple.
    pub founder_children: (usize, usize),
    /// Inclusive range of children per second-generation couple.
    pub children: (usize, usize),
    pub holdout: f64,
    /// Adds `*_grandfather_of`/`*_grandmother_of` inverse relations.
    pub grandparent_inverses: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            founder_couples: 34,
            founder_children: (2, 3),
            children: (2, 3),
            holdout: 0.2,
            grandparent_inverses: false,
            seed: 7,
        }
    }
}

/// One step of a chain: a forward relation, optionally traversed backwards.
#[derive(Copy, Clone)]
struct Step(&'static str, bool);

const FWD: bool = false;
const INV: bool = true;

/// Relations with an inverse spelling that is itself a relation.
const ALIASES: [(&str, &str); 6] = [
    ("father", "father_of"),
    ("mother", "mother_of"),
    ("paternal_grandfather", "paternal_grandfather_of"),
    ("paternal_grandmother", "paternal_grandmother_of"),
    ("maternal_grandfather", "maternal_grandfather_of"),
    ("maternal_grandmother", "maternal_grandmother_of"),
];

const GRANDPARENTS: [&str; 4] = [
    "paternal_grandfather",
    "paternal_grandmother",
    "maternal_grandfather",
    "maternal_grandmother",
];

/// Chains `head = s1 . s2` over forward relations. The last four also
/// fire for uncles and aunts, so their precision is below one.
const CHAINS: [(Step, Step, Step); 12] = [
    (Step("paternal_grandfather", FWD), Step("father", FWD), Step("father", FWD)),
    (Step("paternal_grandmother", FWD), Step("father", FWD), Step("mother", FWD)),
    (Step("maternal_grandfather", FWD), Step("mother", FWD), Step("father", FWD)),
    (Step("maternal_grandmother", FWD), Step("mother", FWD), Step("mother", FWD)),
    (Step("father", INV), Step("paternal_grandfather", INV), Step("father", FWD)),
    (Step("mother", INV), Step("paternal_grandmother", INV), Step("father", FWD)),
    (Step("father", INV), Step("maternal_grandfather", INV), Step("mother", FWD)),
    (Step("mother", INV), Step("maternal_grandmother", INV), Step("mother", FWD)),
    (Step("father", INV), Step("father", FWD), Step("paternal_grandfather", INV)),
    (Step("father", INV), Step("mother", FWD), Step("paternal_grandmother", INV)),
    (Step("mother", INV), Step("father", FWD), Step("maternal_grandfather", INV)),
    (Step("mother", INV), Step("mother", FWD), Step("maternal_grandmother", INV)),
];

/// Wrong rules with confidence in [0.3, 0.5].
pub const NOISY_RULES: &str = "\
mother(a,b) <= father(a,b)\t0.45
father_of(a,b) <= father(a,b)\t0.5
mother_of(a,b) <= mother(a,b)\t0.48
maternal_grandfather(a,b) <= paternal_grandfather(a,b)\t0.4
paternal_grandmother(a,b) <= maternal_grandmother(a,b)\t0.38
paternal_grandfather(a,b) <= father(a,e) & father(b,e)\t0.42
maternal_grandmother(a,b) <= mother(a,e) & mother(b,e)\t0.4
mother_of(a,b) <= mother_of(a,e) & father_of(e,b)\t0.35
father_of(a,b) <= father_of(a,e) & mother_of(e,b)\t0.33
paternal_grandmother(a,b) <= paternal_grandfather(a,e) & father_of(e,b)\t0.3
";

fn alias(rel: &str) -> Option<&'static str> {
    ALIASES.iter().find(|(r, _)| *r == rel).map(|(_, a)| *a)
}

/// An atom between consecutive chain variables `u` and `v`: `rel(u,v)`,
/// or `rel(v,u)` when swapped.
#[derive(Copy, Clone)]
struct Atom {
    rel: &'static str,
    swapped: bool,
}

impl Atom {
    fn render(self, u: char, v: char) -> String {
        let (x, y) = if self.swapped { (v, u) } else { (u, v) };
        format!("{}({x},{y})", self.rel)
    }
}

/// Spellings of `step`: the relation itself and, when present, its alias
/// with the arguments swapped.
fn spellings(step: Step, aliases: &dyn Fn(&str) -> Option<&'static str>) -> Vec<Atom> {
    let Step(rel, inv) = step;
    let mut out = vec![Atom { rel, swapped: inv }];
    if let Some(a) = aliases(rel) {
        out.push(Atom { rel: a, swapped: !inv });
    }
    out
}

/// Adjacency of the full world, for measuring rule precision.
struct World<'a> {
    facts: HashSet<(&'a str, &'a str, &'a str)>,
    out: HashMap<(&'a str, &'a str), Vec<&'a str>>,
    inn: HashMap<(&'a str, &'a str), Vec<&'a str>>,
}

impl<'a> World<'a> {
    fn new(triples: impl Iterator<Item = &'a SymbolicTriple>) -> Self {
        let mut w = World {
            facts: HashSet::new(),
            out: HashMap::new(),
            inn: HashMap::new(),
        };
        for (h, r, t) in triples {
            w.facts.insert((h, r, t));
            w.out.entry((r, h)).or_default().push(t);
            w.inn.entry((r, t)).or_default().push(h);
        }
        w
    }

    fn step(&self, atom: Atom, u: &'a str) -> &[&'a str] {
        let map = if atom.swapped { &self.inn } else { &self.out };
        map.get(&(atom.rel, u)).map_or(&[], Vec::as_slice)
    }

    /// Distinct `(a, b)` pairs satisfying the body, and how many of them satisfy `head(a,b)`.
    fn support(&self, head: &str, body: &[Atom]) -> (usize, usize) {
        let starts: BTreeSet<&str> = self.facts.iter().flat_map(|&(h, _, t)| [h, t]).collect();
        let mut pairs = BTreeSet::new();
        for a in starts {
            let mut frontier = vec![a];
            for &atom in body {
                frontier = frontier.iter().flat_map(|&u| self.step(atom, u).iter().copied()).collect();
            }
            pairs.extend(frontier.into_iter().map(|b| (a, b)));
        }
        let correct = pairs.iter().filter(|&&(a, b)| self.facts.contains(&(a, head, b))).count();
        (pairs.len(), correct)
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub train: Vec<SymbolicTriple>,
    pub valid: Vec<SymbolicTriple>,
    pub test: Vec<SymbolicTriple>,
    pub num_entities: usize,
    grandparent_inverses: bool,
}

impl SynthDataset {
    /// Chain rules of the family world and the alias rules, each with the
    /// standard confidence a miner would see on the train split.
    pub fn planted_rules(&self) -> String {
        let gi = self.grandparent_inverses;
        let aliases = move |rel: &str| alias(rel).filter(|_| gi || !GRANDPARENTS.contains(&rel));
        let world = World::new(self.train.iter());
        let mut out = String::new();
        let mut emit = |head: &str, body: &[Atom]| {
            let (fired, correct) = world.support(head, body);
            if fired == 0 {
                return;
            }
            let vars = [['a', 'b'].as_slice(), &['a', 'e', 'b']][body.len() - 1];
            let atoms: Vec<String> = body
                .iter()
                .zip(vars.windows(2))
                .map(|(atom, w)| atom.render(w[0], w[1]))
                .collect();
            let confidence = correct as f64 / fired as f64;
            out.push_str(&format!("{head}(a,b) <= {}\t{confidence:.3}\n", atoms.join(" & ")));
        };
        for (rel, inv) in ALIASES {
            if aliases(rel).is_some() {
                emit(inv, &[Atom { rel, swapped: true }]);
            }
        }
        for &(head, s1, s2) in &CHAINS {
            let head = match head {
                Step(rel, FWD) => rel,
                Step(rel, _) => match aliases(rel) {
                    Some(a) => a,
                    None => continue,
                },
            };
            for x in spellings(s1, &aliases) {
                for y in spellings(s2, &aliases) {
                    emit(head, &[x, y]);
                }
            }
        }
        out
    }

    pub fn noisy_rules(&self) -> &'static str {
        NOISY_RULES
    }

    pub fn rules(&self) -> String {
        format!("{}{}", self.planted_rules(), NOISY_RULES)
    }

    pub fn knowledge_graph(&self) -> Result<KnowledgeGraph> {
        KnowledgeGraph::from_symbolic(&self.train, &self.valid, &self.test)
    }

    /// Writes `train.txt`, `valid.txt`, `test.txt` and `rules.txt`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        write_triples(&dir.join("train.txt"), &self.train)?;
        write_triples(&dir.join("valid.txt"), &self.valid)?;
        write_triples(&dir.join("test.txt"), &self.test)?;
        let rules = dir.join("rules.txt");
        fs::write(&rules, self.rules()).map_err(|e| Error::io(rules.display().to_string(), e))
    }
}

#[derive(Copy, Clone)]
struct Person {
    parents: Option<(usize, usize)>,
    male: bool,
}

fn triple(h: usize, r: &str, t: usize) -> SymbolicTriple {
    (format!("person{h}"), r.to_string(), format!("person{t}"))
}

fn have_children(
    people: &mut Vec<Person>,
    couple: (usize, usize),
    range: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    (0..rng.gen_range(range.0..=range.1))
        .map(|_| {
            people.push(Person {
                parents: Some(couple),
                male: rng.gen_bool(0.5),
            });
            people.len() - 1
        })
        .collect()
}

pub fn generate(cfg: &SynthConfig) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut people = Vec::new();
    let mut heirs = Vec::new();
    for _ in 0..cfg.founder_couples {
        let f = people.len();
        people.push(Person { parents: None, male: true });
        people.push(Person { parents: None, male: false });
        let kids = have_children(&mut people, (f, f + 1), cfg.founder_children, &mut rng);
        heirs.push(*kids.choose(&mut rng).expect("at least one child"));
    }
    let (mut men, mut women): (Vec<usize>, Vec<usize>) = heirs.iter().partition(|&&i| people[i].male);
    men.shuffle(&mut rng);
    women.shuffle(&mut rng);
    for (&m, &w) in men.iter().zip(&women) {
        have_children(&mut people, (m, w), cfg.children, &mut rng);
    }

    let mut base = Vec::new();
    let mut derived = BTreeSet::new();
    for (i, p) in people.iter().enumerate() {
        let Some((f, m)) = p.parents else { continue };
        for (rel, inv, q, side) in [
            ("father", "father_of", f, "paternal"),
            ("mother", "mother_of", m, "maternal"),
        ] {
            base.push(triple(i, rel, q));
            derived.insert(triple(q, inv, i));
            if let Some((gf, gm)) = people[q].parents {
                for (kind, g) in [("grandfather", gf), ("grandmother", gm)] {
                    let rel = format!("{side}_{kind}");
                    derived.insert(triple(i, &rel, g));
                    if cfg.grandparent_inverses {
                        derived.insert(triple(g, &format!("{rel}_of"), i));
                    }
                }
            }
        }
    }

    let mut derived: Vec<_> = derived.into_iter().collect();
    derived.shuffle(&mut rng);
    let held = (derived.len() as f64 * cfg.holdout).round() as usize;
    let test = derived.split_off(derived.len() - held);
    let mut train = base;
    train.extend(derived);

    SynthDataset {
        train,
        valid: Vec::new(),
        test,
        num_entities: people.len(),
        grandparent_inverses: cfg.grandparent_inverses,
    }
}
