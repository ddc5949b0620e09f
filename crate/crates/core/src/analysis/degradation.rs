use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{local_seed, local_train_with, weighted_average, LocalSpec, LocalWork};
use crate::metrics::Stage;
use crate::nn::{evaluate, ModelParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Initial,
    Local,
    Averaged,
}

/// Accuracy of one client's view at one point of the run. For `Local`
/// records the model is the client's own; otherwise it is the global one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecord {
    pub round: usize,
    pub epoch: usize,
    pub phase: Phase,
    pub client: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DegradationTrace {
    pub records: Vec<DegradationRecord>,
}

impl DegradationTrace {
    /// Client accuracy at the end of local training in `round`, or the
    /// starting accuracy when no local epoch ran.
    pub fn pre_average(&self, round: usize, client: usize) -> Option<f64> {
        let mine = |r: &&DegradationRecord| r.client == client;
        self.records
            .iter()
            .filter(mine)
            .rfind(|r| r.round == round && r.phase == Phase::Local)
            .or_else(|| {
                self.records
                    .iter()
                    .filter(mine)
                    .find(|r| r.round + 1 == round && r.phase != Phase::Local)
            })
            .map(|r| r.accuracy)
    }

    pub fn post_average(&self, round: usize, client: usize) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.phase == Phase::Averaged && r.round == round && r.client == client)
            .map(|r| r.accuracy)
    }

    /// True when, in every round, every client loses accuracy at averaging.
    pub fn drops_every_round(&self, rounds: usize, clients: usize) -> bool {
        (1..=rounds).all(|t| {
            (0..clients).all(
                |i| match (self.pre_average(t, i), self.post_average(t, i)) {
                    (Some(pre), Some(post)) => post < pre,
                    _ => false,
                },
            )
        })
    }
}

/// FedAvg over `clients`, recording each client's accuracy on `evals[i]`
/// (typically held-out data of its own labels) after every local epoch
/// and after every averaging step.
pub fn track_averaging_degradation(
    init: &ModelParams,
    clients: &[Dataset],
    evals: &[Dataset],
    rounds: usize,
    epochs: usize,
    spec: &LocalSpec,
    seed: u64,
) -> Result<DegradationTrace> {
    if clients.is_empty() || clients.len() != evals.len() {
        return Err(Error::Argument(
            "need one evaluation set per client and at least one client".into(),
        ));
    }
    let mut trace = DegradationTrace::default();
    for (i, eval) in evals.iter().enumerate() {
        let accuracy = evaluate(init, eval.inputs(), eval.labels())?;
        trace.records.push(DegradationRecord {
            round: 0,
            epoch: 0,
            phase: Phase::Initial,
            client: i,
            accuracy,
        });
    }
    let weights: Vec<f64> = clients.iter().map(|c| c.len() as f64).collect();
    let mut global = init.clone();
    for round in 1..=rounds {
        let mut locals = Vec::with_capacity(clients.len());
        for (i, data) in clients.iter().enumerate() {
            let eval = &evals[i];
            let records = &mut trace.records;
            let local = local_train_with(
                &global,
                data,
                LocalWork::Epochs(epochs),
                spec,
                Some(&global),
                local_seed(seed, Stage::Avg, 0, round, i),
                |epoch, model| {
                    let accuracy = evaluate(model, eval.inputs(), eval.labels())?;
                    records.push(DegradationRecord {
                        round,
                        epoch,
                        phase: Phase::Local,
                        client: i,
                        accuracy,
                    });
                    Ok(())
                },
            )?;
            locals.push(local);
        }
        global = weighted_average(&locals, &weights)?;
        for (i, eval) in evals.iter().enumerate() {
            let accuracy = evaluate(&global, eval.inputs(), eval.labels())?;
            trace.records.push(DegradationRecord {
                round,
                epoch: epochs,
                phase: Phase::Averaged,
                client: i,
                accuracy,
            });
        }
    }
    Ok(trace)
}
