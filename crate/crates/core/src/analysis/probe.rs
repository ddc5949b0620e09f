use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{local_seed, local_train, LocalSpec, LocalWork};
use crate::math::rng_for;
use crate::metrics::Stage;
use crate::nn::{
    concat_encoders, evaluate, loss_ce, Batch, Classifier, FeatureExtractor, Layer, ModelParams,
    OptimizerState, SgdConfig,
};
use crate::{Error, Matrix, Result};

/// Full-batch gradient descent on a zero-initialised linear classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            steps: 200,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Cross-entropy on the probe's training data after the last step.
    pub loss: f64,
    pub test_loss: f64,
    pub accuracy: f64,
}

/// Fits a linear classifier on the frozen features of `encoder` and
/// reports its final cross-entropy. Lower loss means the features carry
/// more label information.
pub fn probe_frozen_encoder<F: FeatureExtractor + ?Sized>(
    encoder: &F,
    train: &Dataset,
    test: &Dataset,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    if train.classes() != test.classes() {
        return Err(Error::Argument(
            "probe train and test sets disagree on the class count".into(),
        ));
    }
    let batch = Batch::new(
        encoder.features(train.inputs())?,
        train.labels().to_vec(),
        train.classes(),
    )?;
    let test_features = encoder.features(test.inputs())?;
    let mut model =
        ModelParams::from_layers(vec![Layer::zeros(encoder.feature_dim(), train.classes())])?;
    let sgd = SgdConfig {
        learning_rate: cfg.learning_rate,
        momentum: 0.0,
        weight_decay: 0.0,
    };
    let mut opt = OptimizerState::new(sgd, &model);
    for _ in 0..cfg.steps {
        opt.step(&mut model, &batch, false)?;
    }
    Ok(ProbeReport {
        loss: loss_ce(&model.logits(batch.inputs())?, batch.labels())?,
        test_loss: loss_ce(&model.logits(&test_features)?, test.labels())?,
        accuracy: evaluate(&model, &test_features, test.labels())?,
    })
}

/// Two clients' encoders probed on their own data, on each other's data,
/// and (alone or concatenated) on the union of both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeReport {
    /// `own[i]`: encoder i on client i.
    pub own: [ProbeReport; 2],
    /// `exchanged[i]`: the other client's encoder on client i.
    pub exchanged: [ProbeReport; 2],
    /// `single[i]`: encoder i on the combined data.
    pub single: [ProbeReport; 2],
    pub concat: ProbeReport,
}

fn union(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    let inputs = Matrix::vconcat(&[a.inputs().clone(), b.inputs().clone()]);
    let labels: Vec<usize> = a.labels().iter().chain(b.labels()).copied().collect();
    Dataset::new(inputs, labels, a.classes())
}

/// Trains one model per client for `epochs` local epochs from a shared
/// seeded initialisation, then probes the encoders.
pub fn exchange_experiment(
    train: &[Dataset; 2],
    test: &[Dataset; 2],
    layer_dims: &[usize],
    spec: &LocalSpec,
    epochs: usize,
    probe: &ProbeConfig,
    seed: u64,
) -> Result<ExchangeReport> {
    let init = ModelParams::init(layer_dims, &mut rng_for(seed, &[0x9b0e]))?;
    let mut encoders = Vec::with_capacity(2);
    for (i, data) in train.iter().enumerate() {
        let model = local_train(
            &init,
            data,
            LocalWork::Epochs(epochs),
            spec,
            Some(&init),
            local_seed(seed, Stage::Avg, 0, 1, i),
        )?;
        encoders.push(model.encoder());
    }
    let p =
        |e: usize, tr: &Dataset, te: &Dataset| probe_frozen_encoder(&encoders[e], tr, te, probe);
    let all_train = union(&train[0], &train[1])?;
    let all_test = union(&test[0], &test[1])?;
    let concat = concat_encoders(&encoders)?;
    Ok(ExchangeReport {
        own: [p(0, &train[0], &test[0])?, p(1, &train[1], &test[1])?],
        exchanged: [p(1, &train[0], &test[0])?, p(0, &train[1], &test[1])?],
        single: [p(0, &all_train, &all_test)?, p(1, &all_train, &all_test)?],
        concat: probe_frozen_encoder(&concat, &all_train, &all_test, probe)?,
    })
}
