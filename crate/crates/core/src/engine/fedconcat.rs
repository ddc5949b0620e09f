use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::aggregate::{average_layers, sample_participants};
use super::cache::FeatureCache;
use super::fedavg::{averaging_round, check_clients, init_model, local_spec, ClientState};
use super::local::{local_seed, local_train, BatchSource, EncodedRows, LocalWork};
use super::{streams, Executor, FedConfig, Variant};
use crate::cluster::{
    elbow_select_k, infer_label_distribution, kmeans, kmeans_balanced, label_distribution,
    laplace_noise, ClusterAssignment, LabelDistVector,
};
use crate::data::Dataset;
use crate::math::derive_seed;
use crate::metrics::{MetricsLog, Stage};
use crate::nn::{
    concat_encoders, evaluate, Batch, ConcatModel, FeatureExtractor, GlobalEncoder, Layer,
    ModelParams,
};
use crate::{Error, Matrix, Result};

/// Global classifier initialisation from per-cluster classifiers: weights
/// stacked along the feature axis in cluster order, biases summed. The
/// resulting logits are the sum of the cluster models' logits.
pub fn classifier_init(classifiers: &[Layer]) -> Result<Layer> {
    let first = classifiers
        .first()
        .ok_or_else(|| Error::Config("at least one classifier is required".into()))?;
    let m = first.outputs();
    if let Some(bad) = classifiers.iter().position(|c| c.outputs() != m) {
        return Err(Error::Config(format!(
            "classifier {bad} has {} classes, classifier 0 has {m}",
            classifiers[bad].outputs()
        )));
    }
    let weights: Vec<Matrix> = classifiers.iter().map(|c| c.weights.clone()).collect();
    let mut bias = first.bias.clone();
    for c in &classifiers[1..] {
        bias.iter_mut().zip(&c.bias).for_each(|(b, v)| *b += v);
    }
    Layer::new(Matrix::vconcat(&weights), bias)
}

/// How post-training obtains encoder features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeaturePath {
    /// Encode every client's data once and train on the stored features.
    Cached,
    /// Run the frozen encoder on every batch.
    Recompute,
}

#[derive(Debug, Clone)]
pub struct PostTrainOutput {
    pub classifier: Layer,
    pub cache: FeatureCache,
}

struct CachedRows<'a> {
    features: &'a Matrix,
    labels: &'a [usize],
    classes: usize,
}

impl BatchSource for CachedRows<'_> {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn batch(&self, rows: &[usize]) -> Result<Batch> {
        Batch::new(
            self.features.gather_rows(rows),
            rows.iter().map(|&i| self.labels[i]).collect(),
            self.classes,
        )
    }
}

const TEST_KEY: usize = usize::MAX;

/// Classifier-only federated training over a frozen concatenated encoder.
///
/// Runs `cfg.classifier_rounds` rounds; each participant takes
/// `cfg.post_local_steps` minibatch steps on the classifier. Appends one
/// [`Stage::Classifier`] record per round to `log`, charging
/// `2·classifier_units` per participant.
#[allow(clippy::too_many_arguments)]
pub fn post_train<E: Executor>(
    encoder: &GlobalEncoder,
    init: &Layer,
    clients: &[ClientState],
    test: &Dataset,
    cfg: &FedConfig,
    path: FeaturePath,
    classifier_units: f64,
    log: &mut MetricsLog,
    exec: &E,
) -> Result<PostTrainOutput> {
    if init.inputs() != encoder.feature_dim() {
        return Err(Error::Dimension {
            layer: 0,
            expected: encoder.feature_dim(),
            found: init.inputs(),
        });
    }
    let m = init.outputs();
    let mut cache = FeatureCache::new();
    if path == FeaturePath::Cached {
        let mut items: Vec<(usize, &Matrix)> =
            clients.iter().map(|c| (c.id, c.data.inputs())).collect();
        items.push((TEST_KEY, test.inputs()));
        cache.warm(encoder, &items, exec)?;
    }
    let spec = super::local::LocalSpec {
        prox_mu: None,
        ..local_spec(cfg)
    };
    let pick_seed = derive_seed(
        cfg.seed,
        &[streams::PARTICIPANTS, Stage::Classifier as u64, 0],
    );
    let mut classifier = init.clone();
    for round in 1..=cfg.classifier_rounds {
        let participants = sample_participants(clients.len(), cfg.participation, round, pick_seed);
        let step = || -> Result<(Layer, f64)> {
            let global = ModelParams::from_layers(vec![classifier.clone()])?;
            let trained = exec.map(participants.len(), |j| {
                let client = &clients[participants[j]];
                let seed = local_seed(cfg.seed, Stage::Classifier, 0, round, participants[j]);
                let work = LocalWork::Steps(cfg.post_local_steps);
                let model = match path {
                    FeaturePath::Cached => {
                        let rows = CachedRows {
                            features: cache_entry(&cache, client.id)?,
                            labels: client.data.labels(),
                            classes: m,
                        };
                        local_train(&global, &rows, work, &spec, None, seed)?
                    }
                    FeaturePath::Recompute => {
                        let rows = EncodedRows {
                            encoder,
                            data: &client.data,
                        };
                        local_train(&global, &rows, work, &spec, None, seed)?
                    }
                };
                Ok(model.split().1)
            });
            let layers = trained.into_iter().collect::<Result<Vec<_>>>()?;
            let weights: Vec<f64> = participants
                .iter()
                .map(|&c| clients[c].sample_count() as f64)
                .collect();
            let next = average_layers(&layers, &weights)?;
            let accuracy = match path {
                FeaturePath::Cached => {
                    let linear = ModelParams::from_layers(vec![next.clone()])?;
                    evaluate(&linear, cache_entry(&cache, TEST_KEY)?, test.labels())?
                }
                FeaturePath::Recompute => {
                    let model = ConcatModel::new(encoder.clone(), next.clone())?;
                    evaluate(&model, test.inputs(), test.labels())?
                }
            };
            Ok((next, accuracy))
        };
        let (next, accuracy) =
            step().map_err(|e| e.in_round("fed-engine", Stage::Classifier, round))?;
        classifier = next;
        log.add_cost(2.0 * classifier_units * participants.len() as f64);
        log.record(Stage::Classifier, round, accuracy);
    }
    Ok(PostTrainOutput { classifier, cache })
}

fn cache_entry(cache: &FeatureCache, key: usize) -> Result<&Matrix> {
    cache
        .peek(key)
        .ok_or_else(|| Error::Invariant(format!("feature cache has no entry for {key}")))
}

#[derive(Debug, Clone)]
pub struct FedConcatOutput {
    /// Concatenated cluster encoders with the post-trained classifier.
    pub model: ConcatModel,
    /// Stage-2 models, one per cluster.
    pub cluster_models: Vec<ModelParams>,
    /// What the clustering saw, one per client.
    pub distributions: Vec<LabelDistVector>,
    pub assignment: ClusterAssignment,
    pub log: MetricsLog,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

fn stage_one<E: Executor>(
    clients: &[ClientState],
    cfg: &FedConfig,
    dims: &[usize],
    log: &mut MetricsLog,
    exec: &E,
) -> Result<Vec<LabelDistVector>> {
    let mut dists = match cfg.variant {
        Variant::Fedconcat => clients
            .iter()
            .map(|c| label_distribution(c.data.labels(), c.data.classes(), c.id))
            .collect::<Result<Vec<_>>>()?,
        Variant::FedconcatId => {
            // one round of local training from a shared start, used only to
            // read off each client's label bias
            let start = init_model(cfg, dims, &[2])?;
            let spec = local_spec(cfg);
            let d = dims[0];
            let out = exec.map(clients.len(), |i| {
                let c = &clients[i];
                let local = local_train(
                    &start,
                    &c.data,
                    LocalWork::Epochs(cfg.local_epochs),
                    &spec,
                    Some(&start),
                    local_seed(cfg.seed, Stage::Encoder, usize::MAX, 0, i),
                )?;
                infer_label_distribution(
                    &local,
                    cfg.probes,
                    d,
                    derive_seed(cfg.seed, &[streams::INFERENCE, i as u64]),
                    c.id,
                )
            });
            log.add_cost(2.0 * start.param_count() as f64 * clients.len() as f64);
            out.into_iter().collect::<Result<Vec<_>>>()?
        }
        _ => {
            return Err(Error::Config(
                "variant: run_fedconcat needs fedconcat or fedconcat-id".into(),
            ))
        }
    };
    if let Some(eps) = cfg.dp_epsilon {
        let seed = derive_seed(cfg.seed, &[streams::DP]);
        dists = dists
            .iter()
            .map(|d| laplace_noise(d, eps, seed))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(dists)
}

fn ensemble(models: &[ModelParams]) -> Result<ConcatModel> {
    let encoders: Vec<_> = models.iter().map(ModelParams::encoder).collect();
    let classifiers: Vec<Layer> = models.iter().map(|m| m.classifier().clone()).collect();
    ConcatModel::new(concat_encoders(&encoders)?, classifier_init(&classifiers)?)
}

/// The cluster / average / concatenate pipeline.
///
/// 1. Build one label distribution per client (counted for `fedconcat`,
///    inferred from a first local round for `fedconcat-id`, optionally
///    Laplace-noised) and cluster them with K-means.
/// 2. Run `encoder_rounds` FedAvg rounds independently inside each cluster,
///    every cluster starting from its own fresh initialisation.
/// 3. Concatenate the cluster encoders, initialise the global classifier
///    with [`classifier_init`], and post-train it for `classifier_rounds`
///    rounds over all clients with the encoders frozen.
///
/// During stage 2 the logged accuracy is that of the summed-logit ensemble
/// of the cluster models.
pub fn run_fedconcat<E: Executor>(
    clients: &[ClientState],
    test: &Dataset,
    cfg: &FedConfig,
    exec: &E,
) -> Result<FedConcatOutput> {
    cfg.validate()?;
    let (d, m) = check_clients(clients)?;
    let n = clients.len();
    let dims = cfg.layer_dims(d, m);
    let mut log = MetricsLog::default();

    let distributions = stage_one(clients, cfg, &dims, &mut log, exec)?;
    let points = Matrix::from_vec(
        n,
        m,
        distributions
            .iter()
            .flat_map(|p| p.probs.iter().copied())
            .collect(),
    );
    let cluster_seed = derive_seed(cfg.seed, &[streams::CLUSTER]);
    let k = match cfg.elbow_k_max {
        Some(k_max) => elbow_select_k(&points, k_max.min(n), cluster_seed)?,
        None => cfg.clusters,
    };
    if k > n {
        return Err(Error::Config(format!(
            "clusters: {k} clusters for {n} clients"
        )));
    }
    let assignment = if cfg.balanced_clusters {
        kmeans_balanced(&points, k, cfg.balance_cap_factor, cluster_seed)?
    } else {
        kmeans(&points, k, cluster_seed)?
    };
    let groups = assignment.members();
    if let Some(empty) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Invariant(format!("cluster {empty} has no clients")));
    }

    let mut cluster_models = (0..k)
        .map(|j| init_model(cfg, &dims, &[1, j as u64]))
        .collect::<Result<Vec<_>>>()?;
    let w = cluster_models[0].param_count() as f64;
    for round in 1..=cfg.encoder_rounds {
        let (next, participants) = averaging_round(
            &cluster_models,
            &groups,
            Stage::Encoder,
            round,
            clients,
            cfg,
            exec,
        )
        .map_err(|e| e.in_round("fed-engine", Stage::Encoder, round))?;
        cluster_models = next;
        let acc = ensemble(&cluster_models)
            .and_then(|model| evaluate(&model, test.inputs(), test.labels()))
            .map_err(|e| e.in_round("fed-engine", Stage::Encoder, round))?;
        log.add_cost(2.0 * w * participants as f64);
        log.record(Stage::Encoder, round, acc);
    }

    // one-time download of the concatenated model
    log.add_cost(k as f64 * w * n as f64);
    let start = ensemble(&cluster_models)?;
    let frozen = start.encoder.fingerprint();
    let classifier_units: usize = cluster_models
        .iter()
        .map(|c| c.classifier().param_count())
        .sum();
    let post = post_train(
        &start.encoder,
        &start.classifier,
        clients,
        test,
        cfg,
        FeaturePath::Cached,
        classifier_units as f64,
        &mut log,
        exec,
    )?;
    if start.encoder.fingerprint() != frozen {
        return Err(Error::Invariant(
            "encoder changed during post-training".into(),
        ));
    }
    Ok(FedConcatOutput {
        model: ConcatModel::new(start.encoder, post.classifier)?,
        cluster_models,
        distributions,
        assignment,
        log,
        cache_hits: post.cache.hits(),
        cache_misses: post.cache.misses(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng_for;
    use crate::nn::Classifier;

    #[test]
    fn single_classifier_passes_through() {
        let c = ModelParams::init(&[4, 3], &mut rng_for(0, &[]))
            .unwrap()
            .split()
            .1;
        assert_eq!(classifier_init(core::slice::from_ref(&c)).unwrap(), c);
    }

    #[test]
    fn summed_logits() {
        let a = ModelParams::init(&[5, 4, 3], &mut rng_for(1, &[])).unwrap();
        let b = ModelParams::init(&[5, 6, 3], &mut rng_for(2, &[])).unwrap();
        let model = ensemble(&[a.clone(), b.clone()]).unwrap();
        let x = Matrix::from_rows(&[&[0.1, 0.2, 0.3, 0.4, 0.5], &[0.9, 0.1, 0.5, 0.5, 0.0]]);
        let got = model.logits(&x).unwrap();
        let la = a.logits(&x).unwrap();
        let lb = b.logits(&x).unwrap();
        for i in 0..got.as_slice().len() {
            assert!((got.as_slice()[i] - la.as_slice()[i] - lb.as_slice()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_classifiers_give_zero_logits() {
        let c = classifier_init(&[Layer::zeros(3, 4), Layer::zeros(2, 4)]).unwrap();
        assert_eq!(c.inputs(), 5);
        assert!(c
            .weights
            .as_slice()
            .iter()
            .chain(&c.bias)
            .all(|&v| v == 0.0));
        assert!(matches!(
            classifier_init(&[Layer::zeros(3, 4), Layer::zeros(3, 5)]),
            Err(Error::Config(_))
        ));
    }
}
