use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::streams;
use crate::data::Dataset;
use crate::math::{derive_seed, rng_for};
use crate::metrics::Stage;
use crate::nn::{Batch, FeatureExtractor, ModelParams, OptimizerState, SgdConfig};
use crate::{Error, Result};

/// Rows that can be served as training batches.
pub trait BatchSource {
    fn len(&self) -> usize;
    fn batch(&self, rows: &[usize]) -> Result<Batch>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl BatchSource for Dataset {
    fn len(&self) -> usize {
        Dataset::len(self)
    }

    fn batch(&self, rows: &[usize]) -> Result<Batch> {
        Batch::new(
            self.inputs().gather_rows(rows),
            rows.iter().map(|&i| self.labels()[i]).collect(),
            self.classes(),
        )
    }
}

/// Raw rows pushed through a frozen encoder on every request.
#[derive(Debug)]
pub(crate) struct EncodedRows<'a, F> {
    pub encoder: &'a F,
    pub data: &'a Dataset,
}

impl<F: FeatureExtractor> BatchSource for EncodedRows<'_, F> {
    fn len(&self) -> usize {
        self.data.len()
    }

    fn batch(&self, rows: &[usize]) -> Result<Batch> {
        let features = self
            .encoder
            .features(&self.data.inputs().gather_rows(rows))?;
        Batch::new(
            features,
            rows.iter().map(|&i| self.data.labels()[i]).collect(),
            self.data.classes(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalWork {
    /// Full passes over the client data.
    Epochs(usize),
    /// Individual minibatch steps, reshuffling whenever the data runs out.
    Steps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSpec {
    pub batch_size: usize,
    pub sgd: SgdConfig,
    /// FedProx coefficient; requires a global reference model.
    pub prox_mu: Option<f64>,
}

/// Seed of one client's local run in one round.
pub fn local_seed(seed: u64, stage: Stage, group: usize, round: usize, client: usize) -> u64 {
    derive_seed(
        seed,
        &[
            streams::LOCAL,
            stage as u64,
            group as u64,
            round as u64,
            client as u64,
        ],
    )
}

/// Trains a copy of `model` with a fresh optimizer. Each epoch visits the
/// rows in a new seeded order, in batches of `batch_size` (the last one may
/// be short).
pub fn local_train<S: BatchSource + ?Sized>(
    model: &ModelParams,
    data: &S,
    work: LocalWork,
    spec: &LocalSpec,
    global_ref: Option<&ModelParams>,
    seed: u64,
) -> Result<ModelParams> {
    local_train_with(model, data, work, spec, global_ref, seed, |_, _| Ok(()))
}

/// [`local_train`] calling `on_epoch(epoch, model)` after every completed
/// pass over the data (1-based; only for [`LocalWork::Epochs`]).
pub fn local_train_with<S, F>(
    model: &ModelParams,
    data: &S,
    work: LocalWork,
    spec: &LocalSpec,
    global_ref: Option<&ModelParams>,
    seed: u64,
    mut on_epoch: F,
) -> Result<ModelParams>
where
    S: BatchSource + ?Sized,
    F: FnMut(usize, &ModelParams) -> Result<()>,
{
    if spec.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let prox = match (spec.prox_mu, global_ref) {
        (Some(mu), Some(reference)) => Some((reference, mu)),
        (Some(_), None) => {
            return Err(Error::Argument(
                "proximal training needs the global model".into(),
            ))
        }
        (None, _) => None,
    };
    let mut model = model.clone();
    let n = data.len();
    if n == 0 {
        return Ok(model);
    }
    let mut opt = OptimizerState::new(spec.sgd, &model);
    let mut rng = rng_for(seed, &[]);
    let mut order: Vec<usize> = (0..n).collect();
    match work {
        LocalWork::Epochs(epochs) => {
            for epoch in 1..=epochs {
                order.shuffle(&mut rng);
                for rows in order.chunks(spec.batch_size) {
                    opt.step_with_prox(&mut model, &data.batch(rows)?, false, prox)?;
                }
                on_epoch(epoch, &model)?;
            }
        }
        LocalWork::Steps(steps) => {
            let mut cursor = n;
            for _ in 0..steps {
                if cursor >= n {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let end = (cursor + spec.batch_size).min(n);
                opt.step_with_prox(&mut model, &data.batch(&order[cursor..end])?, false, prox)?;
                cursor = end;
            }
        }
    }
    Ok(model)
}
