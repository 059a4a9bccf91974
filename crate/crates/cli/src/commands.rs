use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use log::{info, warn};
use rulepath_core::eval::{explanation_records, find_report, render_explanations, reports_to_csv, reports_to_table};
use rulepath_core::paths::PathExtractor;
use rulepath_core::pipeline::{evaluate_on, fit, scorer_alpha};
use rulepath_core::rules::{encode_all, parse_rules, EncodeStats};
use rulepath_core::train::{write_loss_csv, Checkpoint};
use rulepath_core::{
    explain as explain_pair, extract_paths, ChainRule, ComposedPaths, EntityId, Error, KnowledgeGraph,
    PathSet, RuleIndex, Scorer, Setting, Split, Task,
};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::UsageError;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

pub struct ExplainArgs {
    pub head: String,
    pub tail: String,
    pub top_k: usize,
    pub records: bool,
    pub checkpoint: Option<PathBuf>,
}

const ENCODED_RULES: &str = "rules.encoded.tsv";
const CHECKPOINT: &str = "checkpoint.bin";

/// Hex SHA-256 over length-prefixed parts, so `("ab", "c")` and `("a", "bc")` differ.
fn content_key(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn load_graph(cfg: &RunConfig) -> Result<KnowledgeGraph> {
    let [train, valid, test] = cfg.dataset_paths()?;
    let kg = KnowledgeGraph::load(&train, &valid, &test)?;
    info!(
        "loaded {} entities, {} relations, {} train / {} valid / {} test triples",
        kg.num_entities(),
        kg.num_base_relations(),
        kg.split(Split::Train).len(),
        kg.split(Split::Valid).len(),
        kg.split(Split::Test).len()
    );
    Ok(kg)
}

/// Encoded rules with the counts known before thresholding.
struct Encoded {
    chains: Vec<ChainRule>,
    parsed: usize,
    dropped_unknown: usize,
    rejected: usize,
}

impl Encoded {
    fn index(&self, kg: &KnowledgeGraph, threshold: f64) -> (RuleIndex, EncodeStats) {
        let index = RuleIndex::build(kg, &self.chains, threshold);
        let stats = EncodeStats {
            parsed: self.parsed,
            dropped_unknown: self.dropped_unknown,
            rejected: self.rejected,
            below_threshold: index.num_below_threshold(),
            r1_kept: index.num_r1_rules(),
            r2_kept: index.num_r2_rules(),
        };
        (index, stats)
    }
}

fn rules_key(kg: &KnowledgeGraph, cfg: &RunConfig, source: &[u8]) -> String {
    let format = format!("{:?}", cfg.rules.format);
    content_key(&[kg.dataset_hash().as_bytes(), format.as_bytes(), source])
}

fn encode_from_source(kg: &KnowledgeGraph, cfg: &RunConfig, path: &Path) -> Result<Encoded> {
    let parsed = parse_rules(path, cfg.rules.format, kg)?;
    let (chains, rejected) = encode_all(kg, &parsed);
    Ok(Encoded {
        chains,
        parsed: parsed.rules.len(),
        dropped_unknown: parsed.dropped_unknown,
        rejected,
    })
}

/// All encoded rules, before the threshold, so one file serves every threshold.
fn write_encoded(path: &Path, key: &str, kg: &KnowledgeGraph, enc: &Encoded) -> Result<()> {
    let mut out = format!(
        "# key {key}\n# parsed {} dropped_unknown {} rejected {}\n",
        enc.parsed, enc.dropped_unknown, enc.rejected
    );
    for rule in &enc.chains {
        let mut fields: Vec<String> = vec![kg.relation_name(rule.head)];
        fields.extend(rule.body.iter().map(|&r| kg.relation_name(r)));
        fields.push(rule.confidence.to_string());
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads an encoded-rule file; `None` when its key does not match.
fn read_encoded(path: &Path, key: &str, kg: &KnowledgeGraph) -> Result<Option<Encoded>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.strip_prefix("# key ") == Some(key) => {}
        _ => return Ok(None),
    }
    let mut enc = Encoded {
        chains: Vec::new(),
        parsed: 0,
        dropped_unknown: 0,
        rejected: 0,
    };
    for (i, line) in lines {
        let n = i + 1;
        if let Some(counts) = line.strip_prefix("# ") {
            let words: Vec<&str> = counts.split_whitespace().collect();
            for pair in words.chunks(2) {
                let [name, value] = pair else { continue };
                let value: usize = value.parse().map_err(|_| parse_err(path, n, "bad count"))?;
                match *name {
                    "parsed" => enc.parsed = value,
                    "dropped_unknown" => enc.dropped_unknown = value,
                    "rejected" => enc.rejected = value,
                    _ => {}
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(parse_err(path, n, "expected head, one or two body relations, confidence").into());
        }
        let rel = |s: &str| {
            kg.relation_id(s)
                .ok_or_else(|| parse_err(path, n, format!("unknown relation {s:?}")))
        };
        let (last, rest) = fields.split_last().expect("at least three fields");
        let confidence: f64 = last
            .parse()
            .map_err(|_| parse_err(path, n, format!("bad confidence {last:?}")))?;
        enc.chains.push(ChainRule {
            head: rel(rest[0])?,
            body: rest[1..].iter().map(|s| rel(s)).collect::<Result<_, _>>()?,
            confidence,
        });
    }
    Ok(Some(enc))
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))
}

/// Rule index for training and scoring, reusing the encoded file when its key matches.
fn load_rules(kg: &KnowledgeGraph, cfg: &RunConfig) -> Result<RuleIndex> {
    let Some(source) = &cfg.rules.path else {
        warn!("no rule file configured; training without rules");
        return Ok(RuleIndex::build(kg, &[], cfg.training.confidence_threshold));
    };
    let bytes = fs::read(source).with_context(|| format!("reading rules {}", source.display()))?;
    let key = rules_key(kg, cfg, &bytes);
    let cached = cfg.out_dir.join(ENCODED_RULES);
    let enc = match cached.exists().then(|| read_encoded(&cached, &key, kg)).transpose()?.flatten() {
        Some(enc) => enc,
        None => {
            if cached.exists() {
                warn!("{} is stale; re-encoding {}", cached.display(), source.display());
            }
            let enc = encode_from_source(kg, cfg, source)?;
            ensure_out_dir(cfg)?;
            write_encoded(&cached, &key, kg, &enc)?;
            enc
        }
    };
    let (index, stats) = enc.index(kg, cfg.training.confidence_threshold);
    info!(
        "rules: {} R1 and {} R2 kept at threshold {}",
        stats.r1_kept, stats.r2_kept, cfg.training.confidence_threshold
    );
    Ok(index)
}

fn paths_cache_file(kg: &KnowledgeGraph, cfg: &RunConfig) -> PathBuf {
    let pc = format!("{:?}", cfg.training.path_config());
    let key = content_key(&[kg.dataset_hash().as_bytes(), pc.as_bytes()]);
    cfg.out_dir.join("cache").join(format!("paths-{}.bin", &key[..16]))
}

/// Training paths from the cache, extracting and caching them on a miss.
fn load_or_extract_paths(kg: &KnowledgeGraph, cfg: &RunConfig) -> Result<PathSet> {
    let pc = cfg.training.path_config();
    let file = paths_cache_file(kg, cfg);
    if file.exists() {
        match PathSet::load(&file, kg.dataset_hash(), &pc) {
            Ok(set) => {
                info!("reusing path cache {}", file.display());
                return Ok(set);
            }
            Err(Error::Incompatible(why)) => warn!("rejecting path cache: {why}"),
            Err(e) => return Err(e.into()),
        }
    }
    let set = extract_paths(kg, &pc)?;
    let dir = file.parent().expect("cache file has a parent");
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    set.save(&file, kg.dataset_hash())?;
    info!("wrote path cache {}", file.display());
    Ok(set)
}

pub fn encode_rules(cfg: &RunConfig) -> Result<()> {
    let kg = load_graph(cfg)?;
    let source = cfg
        .rules
        .path
        .as_ref()
        .ok_or_else(|| UsageError("encode-rules needs --rules".into()))?;
    let bytes = fs::read(source).with_context(|| format!("reading rules {}", source.display()))?;
    let enc = encode_from_source(&kg, cfg, source)?;
    ensure_out_dir(cfg)?;
    let out = cfg.out_dir.join(ENCODED_RULES);
    write_encoded(&out, &rules_key(&kg, cfg, &bytes), &kg, &enc)?;
    let (_, stats) = enc.index(&kg, cfg.training.confidence_threshold);
    println!("threshold        {}", cfg.training.confidence_threshold);
    println!("parsed           {}", stats.parsed);
    println!("dropped_unknown  {}", stats.dropped_unknown);
    println!("rejected         {}", stats.rejected);
    println!("below_threshold  {}", stats.below_threshold);
    println!("r1_kept          {}", stats.r1_kept);
    println!("r2_kept          {}", stats.r2_kept);
    println!("encoded rules    {}", out.display());
    cfg.write_resolved("encode-rules")?;
    Ok(())
}

pub fn extract_paths_cmd(cfg: &RunConfig) -> Result<()> {
    let kg = load_graph(cfg)?;
    let set = load_or_extract_paths(&kg, cfg)?;
    println!("pairs   {}", set.num_pairs());
    println!("paths   {}", set.num_paths());
    println!("reliability histogram");
    for (i, count) in set.reliability_histogram().iter().enumerate() {
        println!("  [{:.1}, {:.1}{}  {count}", i as f64 / 10.0, (i + 1) as f64 / 10.0, if i == 9 { "]" } else { ")" });
    }
    println!("cache   {}", paths_cache_file(&kg, cfg).display());
    cfg.write_resolved("extract-paths")?;
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let kg = load_graph(cfg)?;
    let rules = load_rules(&kg, cfg)?;
    let paths = if cfg.training.uses_paths() {
        load_or_extract_paths(&kg, cfg)?
    } else {
        PathSet::empty(cfg.training.path_config())
    };
    let (embeddings, history) = fit(&kg, &rules, &paths, &cfg.training)?;
    ensure_out_dir(cfg)?;
    let ckpt = cfg.out_dir.join(CHECKPOINT);
    Checkpoint {
        embeddings,
        dataset_hash: kg.dataset_hash().to_owned(),
        config_digest: cfg.training.digest(),
    }
    .save(&ckpt)?;
    let loss_csv = cfg.out_dir.join("loss.csv");
    write_loss_csv(&loss_csv, &history)?;
    if let Some(last) = history.last() {
        println!("epochs      {}", last.epoch + 1);
        println!("final loss  {:.6}", last.loss.total());
    }
    println!("checkpoint  {}", ckpt.display());
    println!("loss        {}", loss_csv.display());
    cfg.write_resolved("train")?;
    Ok(())
}

fn load_checkpoint(kg: &KnowledgeGraph, cfg: &RunConfig, path: Option<PathBuf>) -> Result<Checkpoint> {
    let path = path.unwrap_or_else(|| cfg.out_dir.join(CHECKPOINT));
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "checkpoint {} not found; run `rulepath train` first",
            path.display()
        ))
        .into());
    }
    let ckpt = Checkpoint::load(&path)?;
    ckpt.check_compatible(kg)?;
    if ckpt.config_digest != cfg.training.digest() {
        warn!("checkpoint was trained under a different training config");
    }
    Ok(ckpt)
}

pub fn eval(cfg: &RunConfig, checkpoint: Option<PathBuf>, split: SplitArg) -> Result<()> {
    let kg = load_graph(cfg)?;
    let ckpt = load_checkpoint(&kg, cfg, checkpoint)?;
    let rules = load_rules(&kg, cfg)?;
    let split = Split::from(split);
    let reports = evaluate_on(&kg, &rules, &ckpt.embeddings, &cfg.training, kg.split(split))?;
    print!("{}", reports_to_table(&reports));
    if let Some(r) = find_report(&reports, Task::Relation, Setting::Filtered) {
        println!("\nrelation prediction filtered Hits@1  {:.4}", r.hits(1));
    }
    ensure_out_dir(cfg)?;
    let csv = cfg.out_dir.join(format!("eval-{}.csv", split.name()));
    fs::write(&csv, reports_to_csv(&reports)).with_context(|| format!("writing {}", csv.display()))?;
    println!("report  {}", csv.display());
    cfg.write_resolved("eval")?;
    Ok(())
}

/// Up to five symbols closest to `query` by edit distance.
fn nearest<'a>(query: &str, symbols: &'a [String]) -> Vec<&'a str> {
    let mut scored: Vec<(usize, &str)> = symbols
        .iter()
        .map(|s| (strsim::levenshtein(query, s), s.as_str()))
        .collect();
    scored.sort();
    scored.into_iter().take(5).map(|(_, s)| s).collect()
}

fn lookup_entity(kg: &KnowledgeGraph, symbol: &str) -> Result<EntityId> {
    kg.entity_id(symbol).ok_or_else(|| {
        let near = nearest(symbol, kg.entities().symbols()).join(", ");
        Error::Lookup(format!("unknown entity {symbol:?}; nearest: {near}")).into()
    })
}

pub fn explain(cfg: &RunConfig, args: ExplainArgs) -> Result<()> {
    if args.top_k == 0 {
        return Err(UsageError("--top-k must be at least 1".into()).into());
    }
    let kg = load_graph(cfg)?;
    let h = lookup_entity(&kg, &args.head)?;
    let t = lookup_entity(&kg, &args.tail)?;
    let ckpt = load_checkpoint(&kg, cfg, args.checkpoint)?;
    let rules = load_rules(&kg, cfg)?;

    let mut pair_paths = PathSet::empty(cfg.training.path_config());
    if cfg.training.uses_paths() {
        let found = PathExtractor::new(&kg, cfg.training.path_config())?.between(h, t);
        if !found.is_empty() {
            pair_paths.insert(h, t, found);
        }
    }
    let composed = ComposedPaths::build(&pair_paths, &rules);
    let scorer = Scorer {
        embeddings: &ckpt.embeddings,
        paths: &composed,
        norm: cfg.training.norm,
        alpha_path: scorer_alpha(&cfg.training),
    };
    let items = explain_pair(&scorer, &rules, &kg, h, t, args.top_k);
    if args.records {
        print!("{}", explanation_records(&kg, h, t, &items));
    } else {
        print!("{}", render_explanations(&kg, h, t, &items));
    }
    cfg.write_resolved("explain")?;
    Ok(())
}
