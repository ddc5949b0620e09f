use serde::{Deserialize, Serialize};

use crate::math::floor;
use crate::nn::ModelParams;
use crate::{Error, Result};

/// Parameters are 64-bit floats.
pub const BYTES_PER_PARAM: f64 = 8.0;

/// Parameters moved by a FedConcat run: `2wN(T_e + K/2 + cKT_c)`.
///
/// `T_e` encoder rounds cost a full upload and download per client, the
/// concatenated model is downloaded once (`K` models of size `w`), and
/// each of the `T_c` classifier rounds moves `K` classifiers of size `cw`.
pub fn fedconcat_cost(w: f64, c: f64, n: f64, k: f64, t_e: f64, t_c: f64) -> f64 {
    2.0 * w * n * (t_e + k / 2.0 + c * k * t_c)
}

/// `2wNT`.
pub fn fedavg_cost(w: f64, n: f64, t: f64) -> f64 {
    2.0 * w * n * t
}

/// [`fedconcat_cost`] plus one full round (`2wN`) for the inference round.
pub fn fedconcat_id_cost(w: f64, c: f64, n: f64, k: f64, t_e: f64, t_c: f64) -> f64 {
    fedconcat_cost(w, c, n, k, t_e, t_c) + 2.0 * w * n
}

/// Share of the parameters held by the last layer.
pub fn classifier_fraction(model: &ModelParams) -> Result<f64> {
    if model.layers().len() < 2 {
        return Err(Error::Argument(
            "classifier fraction needs a model with at least two layers".into(),
        ));
    }
    Ok(model.classifier().param_count() as f64 / model.param_count() as f64)
}

/// Encoder rounds `T_e` (real-valued) that make FedConcat cost the same as
/// `t_fedavg` FedAvg rounds. `None` when even `T_e = 0` overspends. With
/// `inference_round` the extra FedConcat-ID round is charged too.
pub fn parity_encoder_rounds(
    c: f64,
    k: f64,
    t_c: f64,
    t_fedavg: f64,
    inference_round: bool,
) -> Option<f64> {
    let extra = if inference_round { 1.0 } else { 0.0 };
    let t_e = t_fedavg - k / 2.0 - c * k * t_c - extra;
    (t_e >= 0.0).then_some(t_e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommCostReport {
    pub w: usize,
    pub c: f64,
    pub n: usize,
    pub k: usize,
    pub t_e: usize,
    pub t_c: usize,
    pub inference_round: bool,
    pub fedavg_rounds: usize,
    pub total_fedconcat: f64,
    pub total_fedavg: f64,
    pub bytes_fedconcat: f64,
    pub bytes_fedavg: f64,
}

impl CommCostReport {
    /// `model` is one cluster model; `fedavg_rounds` is the baseline to
    /// compare against.
    pub fn new(
        model: &ModelParams,
        n: usize,
        k: usize,
        t_e: usize,
        t_c: usize,
        inference_round: bool,
        fedavg_rounds: usize,
    ) -> Result<Self> {
        let c = classifier_fraction(model)?;
        let w = model.param_count();
        let mut report = CommCostReport {
            w,
            c,
            n,
            k,
            t_e,
            t_c,
            inference_round,
            fedavg_rounds,
            total_fedconcat: 0.0,
            total_fedavg: 0.0,
            bytes_fedconcat: 0.0,
            bytes_fedavg: 0.0,
        };
        let (a, b) = report.recompute();
        report.total_fedconcat = a;
        report.total_fedavg = b;
        report.bytes_fedconcat = a * BYTES_PER_PARAM;
        report.bytes_fedavg = b * BYTES_PER_PARAM;
        Ok(report)
    }

    /// Both totals from the stored fields.
    pub fn recompute(&self) -> (f64, f64) {
        let f = if self.inference_round {
            fedconcat_id_cost
        } else {
            fedconcat_cost
        };
        let (w, n) = (self.w as f64, self.n as f64);
        (
            f(
                w,
                self.c,
                n,
                self.k as f64,
                self.t_e as f64,
                self.t_c as f64,
            ),
            fedavg_cost(w, n, self.fedavg_rounds as f64),
        )
    }

    /// Largest whole `T_e` keeping FedConcat within the FedAvg budget.
    pub fn parity_t_e(&self) -> Option<usize> {
        parity_encoder_rounds(
            self.c,
            self.k as f64,
            self.t_c as f64,
            self.fedavg_rounds as f64,
            self.inference_round,
        )
        .map(|t| floor(t + 1e-9) as usize)
    }
}
