//! Communication accounting and the diagnostic experiments.

mod cost;
mod degradation;
mod probe;

pub use cost::{
    classifier_fraction, fedavg_cost, fedconcat_cost, fedconcat_id_cost, parity_encoder_rounds,
    CommCostReport, BYTES_PER_PARAM,
};
pub use degradation::{track_averaging_degradation, DegradationRecord, DegradationTrace, Phase};
pub use probe::{
    exchange_experiment, probe_frozen_encoder, ExchangeReport, ProbeConfig, ProbeReport,
};
