//! Trains on the synthetic family world under several settings and prints
//! filtered Hits@10 for entity prediction.
//!
//! `cargo run --release -p rulepath-core --example toy_sweep [epochs] [dim] [lr]`

use std::path::Path;
use std::time::Instant;

use rulepath_core::eval::find_report;
use rulepath_core::pipeline::fit_and_evaluate;
use rulepath_core::rules::{index_parsed, parse_rules_str, RuleFormat};
use rulepath_core::synth::{generate, SynthConfig};
use rulepath_core::{Setting, Task, TrainingConfig};

fn main() -> rulepath_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let env = |k: &str, d: usize| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let defaults = SynthConfig::default();
    let ds = generate(&SynthConfig {
        seed: env("SYNTH_SEED", defaults.seed as usize) as u64,
        founder_couples: env("SYNTH_COUPLES", defaults.founder_couples),
        founder_children: (env("SYNTH_FMIN", defaults.founder_children.0), env("SYNTH_FMAX", defaults.founder_children.1)),
        children: (env("SYNTH_KMIN", defaults.children.0), env("SYNTH_KMAX", defaults.children.1)),
        grandparent_inverses: env("SYNTH_GINV", 0) == 1,
        ..defaults
    });
    let kg = ds.knowledge_graph()?;
    println!(
        "entities {} relations {} train {} test {}",
        kg.num_entities(),
        kg.num_base_relations(),
        kg.train().len(),
        kg.test().len()
    );
    let parsed = parse_rules_str(&ds.rules(), Path::new("rules"), RuleFormat::Normalized, &kg)?;
    let base = TrainingConfig {
        dim: arg(1, 32.0) as usize,
        epochs: arg(0, 100.0) as usize,
        learning_rate: arg(2, 0.001),
        ..Default::default()
    };
    let runs: Vec<(&str, TrainingConfig, f64)> = vec![
        ("ablation a1=a2=0", TrainingConfig { alpha_path: 0.0, alpha_relation: 0.0, ..base.clone() }, 0.7),
        ("threshold 0.0", base.clone(), 0.0),
        ("threshold 0.7", base.clone(), 0.7),
        ("threshold 0.8", base.clone(), 0.8),
        ("threshold 1.0", base.clone(), 1.0),
    ];
    for (name, cfg, threshold) in runs {
        let start = Instant::now();
        let (index, _, _) = index_parsed(&kg, &parsed, threshold);
        let (_, reports) = fit_and_evaluate(&kg, &index, &cfg)?;
        let r = find_report(&reports, Task::EntityCombined, Setting::Filtered).expect("report");
        println!(
            "{name:<18} hits@10 {:.4} mrr {:.4} mr {:.1}  ({:.1}s)",
            r.hits(10),
            r.metrics.mrr,
            r.metrics.mr,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
