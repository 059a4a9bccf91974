use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::paths::PathConfig;

/// Dissimilarity used by every energy function.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Norm {
    #[default]
    L1,
    L2,
}

impl Norm {
    pub fn of(self, x: &[f64]) -> f64 {
        match self {
            Norm::L1 => x.iter().map(|v| v.abs()).sum(),
            Norm::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// Subgradient of the norm at `x`, written into `out`. Zero at kinks.
    pub fn subgradient(self, x: &[f64], out: &mut [f64]) {
        match self {
            Norm::L1 => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            }
            Norm::L2 => {
                let n = self.of(x);
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = if n > 0.0 { v / n } else { 0.0 };
                }
            }
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(Norm::L1),
            "L2" => Ok(Norm::L2),
            _ => Err(Error::Config(format!("unknown norm {s:?}"))),
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Drops the path energy and its loss (and with it every length-2 rule).
    pub disable_paths_and_r2: bool,
    /// Drops the relation-pair energy and its loss.
    pub disable_r1: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batches: usize,
    pub margin_triple: f64,
    pub margin_path: f64,
    pub margin_relation: f64,
    pub alpha_path: f64,
    pub alpha_relation: f64,
    pub norm: Norm,
    pub confidence_threshold: f64,
    pub max_path_steps: usize,
    pub path_cutoff: f64,
    pub paths_per_pair: usize,
    pub seed: u64,
    pub ablation: Ablation,
    /// Single-threaded, bit-reproducible updates.
    pub deterministic: bool,
    /// Rejection-sampling budget for each negative.
    pub negative_attempts: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            dim: 100,
            learning_rate: 0.001,
            epochs: 500,
            batches: 100,
            margin_triple: 1.0,
            margin_path: 1.0,
            margin_relation: 1.0,
            alpha_path: 1.0,
            alpha_relation: 3.0,
            norm: Norm::L1,
            confidence_threshold: 0.7,
            max_path_steps: 2,
            path_cutoff: 0.01,
            paths_per_pair: 200,
            seed: 0,
            ablation: Ablation::default(),
            deterministic: true,
            negative_attempts: 100,
        }
    }
}

impl TrainingConfig {
    // Negated comparisons so that NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if self.batches == 0 {
            return Err(Error::Config("number of batches must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, m) in [
            ("margin1", self.margin_triple),
            ("margin2", self.margin_path),
            ("margin3", self.margin_relation),
        ] {
            if !(m > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {m}")));
            }
        }
        for (name, a) in [("alpha1", self.alpha_path), ("alpha2", self.alpha_relation)] {
            if !(a >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {a}")));
            }
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Config(format!(
                "confidence threshold must lie in [0, 1], got {}",
                self.confidence_threshold
            )));
        }
        self.path_config().validate()
    }

    pub fn path_config(&self) -> PathConfig {
        PathConfig {
            max_steps: self.max_path_steps,
            cutoff: self.path_cutoff,
            per_pair_cap: self.paths_per_pair,
        }
    }

    pub fn uses_paths(&self) -> bool {
        self.alpha_path > 0.0 && !self.ablation.disable_paths_and_r2
    }

    pub fn uses_relation_pairs(&self) -> bool {
        self.alpha_relation > 0.0 && !self.ablation.disable_r1
    }

    /// Hex SHA-256 of the config's `Debug` rendering.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(format!("{self:?}").as_bytes()))
    }
}
