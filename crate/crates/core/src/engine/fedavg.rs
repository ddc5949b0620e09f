use alloc::vec::Vec;

use super::aggregate::{sample_participants, weighted_average};
use super::local::{local_seed, local_train, LocalSpec, LocalWork};
use super::{streams, Executor, FedConfig, Variant};
use crate::data::{Dataset, FederatedPartition};
use crate::math::{derive_seed, rng_for};
use crate::metrics::{MetricsLog, Stage};
use crate::nn::{evaluate, ModelParams};
use crate::{Error, Result};

/// One simulated client and its private data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    pub data: Dataset,
}

impl ClientState {
    pub fn sample_count(&self) -> usize {
        self.data.len()
    }
}

/// Materialises each client's rows of `ds`.
pub fn build_clients(ds: &Dataset, partition: &FederatedPartition) -> Result<Vec<ClientState>> {
    partition
        .clients
        .iter()
        .enumerate()
        .map(|(id, rows)| {
            Ok(ClientState {
                id,
                data: ds.subset(rows)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FedAvgOutput {
    pub model: ModelParams,
    pub log: MetricsLog,
}

pub(crate) fn init_model(cfg: &FedConfig, dims: &[usize], stream: &[u64]) -> Result<ModelParams> {
    let mut tags = Vec::with_capacity(stream.len() + 1);
    tags.push(streams::INIT);
    tags.extend_from_slice(stream);
    ModelParams::init(dims, &mut rng_for(cfg.seed, &tags))
}

/// The seeded starting point of [`run_fedavg`] for `d` inputs and `m` classes.
pub fn initial_model(cfg: &FedConfig, d: usize, m: usize) -> Result<ModelParams> {
    init_model(cfg, &cfg.layer_dims(d, m), &[0])
}

pub(crate) fn local_spec(cfg: &FedConfig) -> LocalSpec {
    LocalSpec {
        batch_size: cfg.batch_size,
        sgd: cfg.sgd(),
        prox_mu: (cfg.variant == Variant::Fedprox).then_some(cfg.prox_mu),
    }
}

/// One averaging round for several independent groups of clients.
///
/// Each group samples its own participants, every participant trains
/// locally from its group's model, and each group averages its
/// participants' models weighted by sample count. Returns the new group
/// models and the number of participating clients.
pub(crate) fn averaging_round<E: Executor>(
    globals: &[ModelParams],
    groups: &[Vec<usize>],
    stage: Stage,
    round: usize,
    clients: &[ClientState],
    cfg: &FedConfig,
    exec: &E,
) -> Result<(Vec<ModelParams>, usize)> {
    let spec = local_spec(cfg);
    let picked: Vec<Vec<usize>> = groups
        .iter()
        .enumerate()
        .map(|(g, members)| {
            let seed = derive_seed(cfg.seed, &[streams::PARTICIPANTS, stage as u64, g as u64]);
            sample_participants(members.len(), cfg.participation, round, seed)
                .into_iter()
                .map(|i| members[i])
                .collect()
        })
        .collect();
    let jobs: Vec<(usize, usize)> = picked
        .iter()
        .enumerate()
        .flat_map(|(g, ids)| ids.iter().map(move |&c| (g, c)))
        .collect();
    let trained = exec.map(jobs.len(), |j| {
        let (g, c) = jobs[j];
        let global = &globals[g];
        local_train(
            global,
            &clients[c].data,
            LocalWork::Epochs(cfg.local_epochs),
            &spec,
            Some(global),
            local_seed(cfg.seed, stage, g, round, c),
        )
    });
    let mut trained = trained.into_iter();
    let mut next = Vec::with_capacity(globals.len());
    for (g, ids) in picked.iter().enumerate() {
        if ids.is_empty() {
            next.push(globals[g].clone());
            continue;
        }
        let models = trained
            .by_ref()
            .take(ids.len())
            .collect::<Result<Vec<_>>>()?;
        let weights: Vec<f64> = ids
            .iter()
            .map(|&c| clients[c].sample_count() as f64)
            .collect();
        next.push(weighted_average(&models, &weights)?);
    }
    Ok((next, jobs.len()))
}

pub(crate) fn check_clients(clients: &[ClientState]) -> Result<(usize, usize)> {
    let first = clients
        .first()
        .ok_or_else(|| Error::Config("at least one client is required".into()))?;
    let (d, m) = (first.data.dim(), first.data.classes());
    if let Some(bad) = clients
        .iter()
        .position(|c| c.data.dim() != d || c.data.classes() != m)
    {
        return Err(Error::Config(alloc::format!(
            "client {bad} has a different feature width or class count"
        )));
    }
    Ok((d, m))
}

/// FedAvg (or FedProx) for `cfg.rounds` rounds, evaluating the global
/// model on `test` after every round.
pub fn run_fedavg<E: Executor>(
    clients: &[ClientState],
    test: &Dataset,
    cfg: &FedConfig,
    exec: &E,
) -> Result<FedAvgOutput> {
    cfg.validate()?;
    if !matches!(cfg.variant, Variant::Fedavg | Variant::Fedprox) {
        return Err(Error::Config(
            "variant: run_fedavg needs fedavg or fedprox".into(),
        ));
    }
    let (d, m) = check_clients(clients)?;
    let mut model = initial_model(cfg, d, m)?;
    let w = model.param_count() as f64;
    let everyone = [(0..clients.len()).collect::<Vec<_>>()];
    let mut log = MetricsLog::default();
    for round in 1..=cfg.rounds {
        let step = averaging_round(
            core::slice::from_ref(&model),
            &everyone,
            Stage::Avg,
            round,
            clients,
            cfg,
            exec,
        )
        .and_then(|(mut next, participants)| {
            let acc = evaluate(&next[0], test.inputs(), test.labels())?;
            Ok((next.remove(0), participants, acc))
        })
        .map_err(|e| e.in_round("fed-engine", Stage::Avg, round))?;
        model = step.0;
        log.add_cost(2.0 * w * step.1 as f64);
        log.record(Stage::Avg, round, step.2);
    }
    Ok(FedAvgOutput { model, log })
}
