use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::nn::SgdConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Fedavg,
    Fedprox,
    /// Cluster on the uploaded label distributions.
    Fedconcat,
    /// Cluster on label distributions inferred from first-round models.
    FedconcatId,
}

impl Variant {
    pub fn is_concat(self) -> bool {
        matches!(self, Variant::Fedconcat | Variant::FedconcatId)
    }
}

/// Every knob of a federated run. Defaults follow the reference setup:
/// SGD lr 0.01, momentum 0.9, weight decay 1e-5, batch 64, 10 local epochs
/// per averaging round, 3 local steps per classifier round, K = 5,
/// 10 000 probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedConfig {
    pub variant: Variant,
    /// Rounds of FedAvg / FedProx.
    pub rounds: usize,
    /// Per-cluster averaging rounds (`T_e`).
    pub encoder_rounds: usize,
    /// Classifier post-training rounds (`T_c`).
    pub classifier_rounds: usize,
    pub local_epochs: usize,
    pub post_local_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// FedProx proximal coefficient.
    pub prox_mu: f64,
    /// Fraction of clients sampled each round, in `(0, 1]`.
    pub participation: f64,
    pub clusters: usize,
    /// When set, the cluster count is chosen by the elbow rule over `2..k_max`.
    pub elbow_k_max: Option<usize>,
    pub balanced_clusters: bool,
    pub balance_cap_factor: f64,
    /// Random inputs used to infer a label distribution.
    pub probes: usize,
    /// Laplace noise on the label distributions before clustering.
    pub dp_epsilon: Option<f64>,
    /// Hidden widths; the last one is the encoder output width.
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for FedConfig {
    fn default() -> Self {
        let sgd = SgdConfig::default();
        FedConfig {
            variant: Variant::Fedavg,
            rounds: 50,
            encoder_rounds: 31,
            classifier_rounds: 200,
            local_epochs: 10,
            post_local_steps: 3,
            batch_size: 64,
            learning_rate: sgd.learning_rate,
            momentum: sgd.momentum,
            weight_decay: sgd.weight_decay,
            prox_mu: 0.01,
            participation: 1.0,
            clusters: 5,
            elbow_k_max: None,
            balanced_clusters: false,
            balance_cap_factor: 1.2,
            probes: 10_000,
            dp_epsilon: None,
            hidden: vec![64, 32],
            seed: 0,
        }
    }
}

fn field(name: &str, msg: &str) -> Error {
    Error::Config(format!("{name}: {msg}"))
}

impl FedConfig {
    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    /// `[input_dim, hidden..., classes]`.
    pub fn layer_dims(&self, input_dim: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(&self.hidden);
        dims.push(classes);
        dims
    }

    /// Checks ranges. Error messages start with the offending field name.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(field("batch_size", "must be positive"));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(field("participation", "must lie in (0, 1]"));
        }
        if self.clusters == 0 {
            return Err(field("clusters", "must be at least 1"));
        }
        if let Some(k) = self.elbow_k_max {
            if k < 2 {
                return Err(field("elbow_k_max", "must be at least 2"));
            }
        }
        if !(self.balance_cap_factor >= 1.0) {
            return Err(field("balance_cap_factor", "must be at least 1"));
        }
        if self.probes == 0 {
            return Err(field("probes", "must be positive"));
        }
        if let Some(eps) = self.dp_epsilon {
            if !(eps > 0.0) {
                return Err(field("dp_epsilon", "must be positive"));
            }
        }
        if !(self.prox_mu >= 0.0 && self.prox_mu.is_finite()) {
            return Err(field("prox_mu", "must be nonnegative"));
        }
        if self.hidden.contains(&0) {
            return Err(field("hidden", "widths must be positive"));
        }
        if self.variant.is_concat() && self.hidden.is_empty() {
            return Err(field(
                "hidden",
                "concatenation needs at least one hidden layer",
            ));
        }
        self.sgd().validate().map_err(|e| match e {
            Error::Config(msg) => Error::Config(msg),
            other => other,
        })
    }
}
