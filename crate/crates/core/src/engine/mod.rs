//! Federated training: local updates, averaging, and the two round loops.
//!
//! [`run_fedavg`] covers FedAvg and FedProx. [`run_fedconcat`] runs the
//! three-stage pipeline: group clients by label distribution, run FedAvg
//! inside each group, then freeze the groups' encoders side by side and
//! train one shared linear classifier on top.
//!
//! All randomness is drawn from streams derived from [`FedConfig::seed`];
//! parallel work goes through an [`Executor`] and is always folded back in
//! client / cluster index order, so results do not depend on how many
//! threads run it.

mod aggregate;
mod cache;
mod config;
mod exec;
mod fedavg;
mod fedconcat;
mod local;

pub use aggregate::{average_layers, sample_participants, weighted_average};
pub use cache::{features_cached, FeatureCache};
pub use config::{FedConfig, Variant};
pub use exec::{Executor, Sequential};
pub use fedavg::{build_clients, initial_model, run_fedavg, ClientState, FedAvgOutput};
pub use fedconcat::{
    classifier_init, post_train, run_fedconcat, FeaturePath, FedConcatOutput, PostTrainOutput,
};
pub use local::{local_seed, local_train, local_train_with, BatchSource, LocalSpec, LocalWork};

pub(crate) mod streams {
    pub const INIT: u64 = 0x1417;
    pub const PARTICIPANTS: u64 = 0x9a27;
    pub const LOCAL: u64 = 0x10ca;
    pub const INFERENCE: u64 = 0x1dfe;
    pub const DP: u64 = 0xd9d9;
    pub const CLUSTER: u64 = 0xc105;
}
