//! Run configuration: defaults, then the config file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rulepath_core::rules::RuleFormat;
use rulepath_core::{Norm, TrainingConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `train.txt`, `valid.txt` and `test.txt`.
    pub dir: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    pub path: Option<PathBuf>,
    pub format: RuleFormat,
}

impl Default for RulesConfig {
    fn default() -> Self {
        RulesConfig {
            path: None,
            format: RuleFormat::Normalized,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub rules: RulesConfig,
    pub training: TrainingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            rules: RulesConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblationFlag {
    #[value(name = "disable_paths_and_r2")]
    DisablePathsAndR2,
    #[value(name = "disable_r1")]
    DisableR1,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatFlag {
    Normalized,
    Amie,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum NormFlag {
    L1,
    L2,
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Clone, Debug, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory with train.txt, valid.txt and test.txt.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    #[arg(long, global = true)]
    pub valid: Option<PathBuf>,
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    /// Rule file (normalized text or AMIE+ TSV).
    #[arg(long, global = true)]
    pub rules: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub rule_format: Option<FormatFlag>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true)]
    pub confidence_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub max_path_steps: Option<usize>,
    #[arg(long, global = true)]
    pub path_cutoff: Option<f64>,
    #[arg(long, global = true)]
    pub paths_per_pair: Option<usize>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batches: Option<usize>,
    #[arg(long, global = true)]
    pub margin1: Option<f64>,
    #[arg(long, global = true)]
    pub margin2: Option<f64>,
    #[arg(long, global = true)]
    pub margin3: Option<f64>,
    #[arg(long, global = true)]
    pub alpha1: Option<f64>,
    #[arg(long, global = true)]
    pub alpha2: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub norm: Option<NormFlag>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Terms to switch off; repeatable.
    #[arg(long, global = true, value_enum, num_args = 1..)]
    pub ablation: Vec<AblationFlag>,
    /// Single-threaded, bit-reproducible training.
    #[arg(long, global = true, conflicts_with = "parallel")]
    pub deterministic: bool,
    /// Parallel gradient computation within each batch.
    #[arg(long, global = true)]
    pub parallel: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_file(path)?,
            None => RunConfig::default(),
        };
        let data = &mut cfg.data;
        set(&mut data.dir, self.data_dir.clone());
        set(&mut data.train, self.train.clone());
        set(&mut data.valid, self.valid.clone());
        set(&mut data.test, self.test.clone());
        set(&mut cfg.rules.path, self.rules.clone());
        if let Some(f) = self.rule_format {
            cfg.rules.format = match f {
                FormatFlag::Normalized => RuleFormat::Normalized,
                FormatFlag::Amie => RuleFormat::Amie,
            };
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }

        let t = &mut cfg.training;
        macro_rules! apply {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { t.$field = v; })*
            };
        }
        apply!(
            confidence_threshold => confidence_threshold,
            max_path_steps => max_path_steps,
            path_cutoff => path_cutoff,
            paths_per_pair => paths_per_pair,
            dim => dim,
            lr => learning_rate,
            epochs => epochs,
            batches => batches,
            margin1 => margin_triple,
            margin2 => margin_path,
            margin3 => margin_relation,
            alpha1 => alpha_path,
            alpha2 => alpha_relation,
            seed => seed,
        );
        if let Some(n) = self.norm {
            t.norm = match n {
                NormFlag::L1 => Norm::L1,
                NormFlag::L2 => Norm::L2,
            };
        }
        for a in &self.ablation {
            match a {
                AblationFlag::DisablePathsAndR2 => t.ablation.disable_paths_and_r2 = true,
                AblationFlag::DisableR1 => t.ablation.disable_r1 = true,
            }
        }
        if self.deterministic {
            t.deterministic = true;
        }
        if self.parallel {
            t.deterministic = false;
        }
        t.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn load_file(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

impl RunConfig {
    /// Train, valid and test paths; explicit paths beat the data directory.
    pub fn dataset_paths(&self) -> Result<[PathBuf; 3]> {
        let pick = |explicit: &Option<PathBuf>, name: &str| -> Result<PathBuf> {
            match (explicit, &self.data.dir) {
                (Some(p), _) => Ok(p.clone()),
                (None, Some(dir)) => Ok(dir.join(format!("{name}.txt"))),
                (None, None) => Err(UsageError(format!(
                    "no {name} split: pass --data-dir or --{name}"
                ))
                .into()),
            }
        };
        Ok([
            pick(&self.data.train, "train")?,
            pick(&self.data.valid, "valid")?,
            pick(&self.data.test, "test")?,
        ])
    }

    /// Writes `<command>.resolved.toml` into the output directory.
    pub fn write_resolved(&self, command: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join(format!("{command}.resolved.toml"));
        let text = toml::to_string(self).context("serializing resolved config")?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
