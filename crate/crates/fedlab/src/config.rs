//! TOML experiment description.
//!
//! ```toml
//! [dataset]            # or: kind = "file", path = "train.fds"
//! kind = "blobs"
//! classes = 10
//! dim = 32
//! per_class = 500
//! spread = 0.8
//! seed = 0
//!
//! [test]
//! per_class = 100      # held-out rows per class; or path = "test.fds"
//!
//! [partition]
//! kind = "classes-per-client"   # or "dirichlet" (beta = ...) or "iid"
//! clients = 40
//! k = 2
//! seed = 0
//!
//! [algorithm]          # any FedConfig field; absent fields take defaults
//! variant = "fedconcat"
//! encoder_rounds = 29
//! classifier_rounds = 50
//!
//! [output]
//! dir = "runs/fedconcat"
//!
//! [probe]              # optional
//! epochs = 50
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use fedlab_core::analysis::ProbeConfig;
use fedlab_core::data::PartitionKind;
use fedlab_core::engine::FedConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RunError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub test: TestSpec,
    pub partition: PartitionSpec,
    #[serde(default)]
    pub algorithm: FedConfig,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs {
        classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

/// Held-out evaluation data: a file, or `per_class` rows per class
/// (freshly generated for blobs, split off a file dataset otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSpec {
    pub per_class: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for TestSpec {
    fn default() -> Self {
        TestSpec {
            per_class: 100,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionName {
    ClassesPerClient,
    Dirichlet,
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub kind: PartitionName,
    pub clients: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl PartitionSpec {
    pub fn kind(&self) -> Result<PartitionKind> {
        match self.kind {
            PartitionName::ClassesPerClient => match self.k {
                Some(k) => Ok(PartitionKind::ClassesPerClient { k }),
                None => Err(RunError::config(
                    "partition.k",
                    "required for classes-per-client",
                )),
            },
            PartitionName::Dirichlet => match self.beta {
                Some(beta) => Ok(PartitionKind::Dirichlet { beta }),
                None => Err(RunError::config("partition.beta", "required for dirichlet")),
            },
            PartitionName::Iid => Ok(PartitionKind::Iid),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub checkpoints: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            checkpoints: true,
        }
    }
}

/// Linear probes. In `run` the final encoder is probed on the train/test
/// data; the `probe` verb runs the two-client encoder exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSpec {
    pub steps: usize,
    pub learning_rate: f64,
    /// Local epochs per client in the exchange experiment.
    pub epochs: usize,
    /// Classes of the two exchange clients; defaults to the lower and upper
    /// half of the labels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client_classes: Option<[Vec<usize>; 2]>,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        let p = ProbeConfig::default();
        ProbeSpec {
            steps: p.steps,
            learning_rate: p.learning_rate,
            epochs: 50,
            client_classes: None,
        }
    }
}

impl ProbeSpec {
    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            steps: self.steps,
            learning_rate: self.learning_rate,
        }
    }
}

fn prefix(e: fedlab_core::Error, section: &str) -> RunError {
    match e {
        fedlab_core::Error::Config(msg) => match msg.split_once(": ") {
            Some((field, rest)) => RunError::config(format!("{section}.{field}"), rest),
            None => RunError::config(section, msg),
        },
        other => RunError::Core(other),
    }
}

impl ExperimentConfig {
    /// Parses TOML; errors name the offending field by its dotted path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de =
            toml::Deserializer::parse(text).map_err(|e| RunError::config("<toml>", e.message()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            RunError::config(
                if field == "." { "<root>".into() } else { field },
                e.into_inner().message(),
            )
        })
    }

    /// Reads, parses, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSpec::File { path } = &mut self.dataset {
            fix(path);
        }
        if let Some(p) = &mut self.test.path {
            fix(p);
        }
        if let Some(p) = &mut self.output.dir {
            fix(p);
        }
    }

    /// Replaces every seed (data, partition, algorithm).
    pub fn override_seed(&mut self, seed: u64) {
        if let DatasetSpec::Blobs { seed: s, .. } = &mut self.dataset {
            *s = seed;
        }
        self.partition.seed = seed;
        self.algorithm.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetSpec::Blobs {
                classes,
                dim,
                per_class,
                spread,
                ..
            } => {
                if *classes < 2 {
                    return Err(RunError::config("dataset.classes", "must be at least 2"));
                }
                if *dim < 2 {
                    return Err(RunError::config("dataset.dim", "must be at least 2"));
                }
                if *per_class == 0 {
                    return Err(RunError::config("dataset.per_class", "must be positive"));
                }
                if !(*spread > 0.0 && spread.is_finite()) {
                    return Err(RunError::config("dataset.spread", "must be positive"));
                }
            }
            DatasetSpec::File { path } => {
                if !path.is_file() {
                    return Err(RunError::config(
                        "dataset.path",
                        format!("{} does not exist", path.display()),
                    ));
                }
            }
        }
        match &self.test.path {
            Some(p) if !p.is_file() => {
                return Err(RunError::config(
                    "test.path",
                    format!("{} does not exist", p.display()),
                ));
            }
            None if self.test.per_class == 0 => {
                return Err(RunError::config(
                    "test.per_class",
                    "must be positive when no test file is given",
                ));
            }
            _ => {}
        }
        if self.partition.clients == 0 {
            return Err(RunError::config("partition.clients", "must be positive"));
        }
        match self.partition.kind()? {
            PartitionKind::ClassesPerClient { k: 0 } => {
                return Err(RunError::config("partition.k", "must be positive"));
            }
            PartitionKind::Dirichlet { beta } if !(beta > 0.0 && beta.is_finite()) => {
                return Err(RunError::config("partition.beta", "must be positive"));
            }
            _ => {}
        }
        self.algorithm
            .validate()
            .map_err(|e| prefix(e, "algorithm"))?;
        if let Some(p) = &self.probe {
            if p.steps == 0 {
                return Err(RunError::config("probe.steps", "must be positive"));
            }
            if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                return Err(RunError::config("probe.learning_rate", "must be positive"));
            }
            if let Some([a, b]) = &p.client_classes {
                if a.is_empty() || b.is_empty() || a.iter().any(|c| b.contains(c)) {
                    return Err(RunError::config(
                        "probe.client_classes",
                        "need two nonempty disjoint class sets",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Fully resolved config, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of every semantic field: the output section is left out.
    pub fn hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.output = OutputSpec::default();
        digest(&semantic)
    }

    /// Hash of the data sections only: runs with equal lineage hashes were
    /// evaluated on the same test set.
    pub fn lineage_hash(&self) -> String {
        digest(&(&self.dataset, &self.test))
    }
}

fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serialises");
    let sum = Sha256::digest(&bytes);
    sum.iter().map(|b| format!("{b:02x}")).collect()
}
