//! Config in, metrics and checkpoints out.

use std::path::PathBuf;
use std::time::Instant;

use fedlab_core::analysis::{
    exchange_experiment, probe_frozen_encoder, CommCostReport, ExchangeReport, ProbeReport,
    BYTES_PER_PARAM,
};
use fedlab_core::cluster::{ClusterAssignment, LabelDistVector};
use fedlab_core::data::{
    partition_classes, partition_dirichlet, partition_iid, BlobSpec, Dataset, FederatedPartition,
    PartitionKind,
};
use fedlab_core::engine::{build_clients, run_fedavg, run_fedconcat, Executor, LocalSpec, Variant};
use fedlab_core::metrics::{MetricsLog, RoundRecord};
use fedlab_core::nn::{ConcatModel, ModelParams};
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSpec, ExperimentConfig};
use crate::error::{Result, RunError};
use crate::format::{load_dataset, save_concat_model, save_dataset, save_model, write_atomic};

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Training and held-out data as described by the config.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.dataset {
        DatasetSpec::Blobs {
            classes,
            dim,
            per_class,
            spread,
            seed,
        } => {
            let spec = BlobSpec {
                classes: *classes,
                dim: *dim,
                per_class: *per_class,
                spread: *spread,
                seed: *seed,
            };
            match &cfg.test.path {
                Some(p) => Ok((spec.generate()?, load_dataset(p)?)),
                None => Ok(spec.generate_with_test(cfg.test.per_class)?),
            }
        }
        DatasetSpec::File { path } => {
            let all = load_dataset(path)?;
            match &cfg.test.path {
                Some(p) => Ok((all, load_dataset(p)?)),
                None => Ok(all.stratified_split(cfg.test.per_class, cfg.partition.seed)?),
            }
        }
    }
}

pub fn partition(cfg: &ExperimentConfig, train: &Dataset) -> Result<FederatedPartition> {
    let p = &cfg.partition;
    Ok(match p.kind()? {
        PartitionKind::ClassesPerClient { k } => partition_classes(train, p.clients, k, p.seed)?,
        PartitionKind::Dirichlet { beta } => partition_dirichlet(train, p.clients, beta, p.seed)?,
        PartitionKind::Iid => partition_iid(train, p.clients, p.seed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub dataset: Option<u64>,
    pub partition: u64,
    pub algorithm: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvStamp {
    pub config_hash: String,
    /// Hash of the dataset and test sections only.
    pub lineage_hash: String,
    pub seeds: Seeds,
    pub fedlab_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_accuracy: Option<f64>,
    pub total_cost: f64,
    pub total_bytes: f64,
    pub evaluated_rounds: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgCost {
    pub w: usize,
    pub n: usize,
    pub rounds: usize,
    pub total_fedavg: f64,
    pub bytes_fedavg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CommCost {
    Concat(CommCostReport),
    Avg(AvgCost),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProbes {
    pub final_encoder: ProbeReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cluster_encoders: Vec<ProbeReport>,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub variant: Variant,
    pub records: Vec<RoundRecord>,
    pub summary: Summary,
    pub env: EnvStamp,
    pub comm_cost: CommCost,
    #[serde(default)]
    pub distributions: Option<Vec<LabelDistVector>>,
    #[serde(default)]
    pub assignment: Option<ClusterAssignment>,
    #[serde(default)]
    pub cache: Option<CacheStats>,
    #[serde(default)]
    pub probes: Option<RunProbes>,
}

impl MetricsFile {
    pub fn log(&self) -> MetricsLog {
        MetricsLog {
            records: self.records.clone(),
            total_cost: self.summary.total_cost,
        }
    }
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Single(ModelParams),
    Concat {
        model: ConcatModel,
        clusters: Vec<Vec<usize>>,
    },
}

/// Trains and evaluates without touching the filesystem (except to read
/// file datasets). `wall_time_secs` is filled in.
pub fn execute<E: Executor>(
    cfg: &ExperimentConfig,
    exec: &E,
) -> Result<(MetricsFile, TrainedModel)> {
    let start = Instant::now();
    let (train, test) = load_data(cfg)?;
    let part = partition(cfg, &train)?;
    let clients = build_clients(&train, &part)?;
    let alg = &cfg.algorithm;
    let n = clients.len();
    let env = EnvStamp {
        config_hash: cfg.hash(),
        lineage_hash: cfg.lineage_hash(),
        seeds: Seeds {
            dataset: match cfg.dataset {
                DatasetSpec::Blobs { seed, .. } => Some(seed),
                DatasetSpec::File { .. } => None,
            },
            partition: cfg.partition.seed,
            algorithm: alg.seed,
        },
        fedlab_version: env!("CARGO_PKG_VERSION").into(),
    };
    let (log, trained, comm_cost, distributions, assignment, cache, probes) = if alg
        .variant
        .is_concat()
    {
        let out = run_fedconcat(&clients, &test, alg, exec)?;
        let report = CommCostReport::new(
            &out.cluster_models[0],
            n,
            out.assignment.k,
            alg.encoder_rounds,
            alg.classifier_rounds,
            alg.variant == Variant::FedconcatId,
            alg.rounds,
        )?;
        let probes = match &cfg.probe {
            Some(p) => Some(RunProbes {
                final_encoder: probe_frozen_encoder(
                    &out.model.encoder,
                    &train,
                    &test,
                    &p.probe_config(),
                )?,
                cluster_encoders: out
                    .cluster_models
                    .iter()
                    .map(|m| probe_frozen_encoder(&m.encoder(), &train, &test, &p.probe_config()))
                    .collect::<fedlab_core::Result<_>>()?,
            }),
            None => None,
        };
        let clusters = out.assignment.members();
        (
            out.log,
            TrainedModel::Concat {
                model: out.model,
                clusters,
            },
            CommCost::Concat(report),
            Some(out.distributions),
            Some(out.assignment),
            Some(CacheStats {
                hits: out.cache_hits,
                misses: out.cache_misses,
            }),
            probes,
        )
    } else {
        let out = run_fedavg(&clients, &test, alg, exec)?;
        let w = out.model.param_count();
        let total = fedlab_core::analysis::fedavg_cost(w as f64, n as f64, alg.rounds as f64);
        let probes = match &cfg.probe {
            Some(p) => Some(RunProbes {
                final_encoder: probe_frozen_encoder(
                    &out.model.encoder(),
                    &train,
                    &test,
                    &p.probe_config(),
                )?,
                cluster_encoders: Vec::new(),
            }),
            None => None,
        };
        (
            out.log,
            TrainedModel::Single(out.model),
            CommCost::Avg(AvgCost {
                w,
                n,
                rounds: alg.rounds,
                total_fedavg: total,
                bytes_fedavg: total * BYTES_PER_PARAM,
            }),
            None,
            None,
            None,
            probes,
        )
    };
    let metrics = MetricsFile {
        variant: alg.variant,
        summary: Summary {
            final_accuracy: log.final_accuracy(),
            total_cost: log.total_cost,
            total_bytes: log.total_cost * BYTES_PER_PARAM,
            evaluated_rounds: log.records.len(),
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
        records: log.records,
        env,
        comm_cost,
        distributions,
        assignment,
        cache,
        probes,
    };
    Ok((metrics, trained))
}

/// `round,stage,accuracy,cumulative_cost`, one row per evaluated round.
pub fn curves_csv(records: &[RoundRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| RunError::Other(e.to_string());
    w.write_record(["round", "stage", "accuracy", "cumulative_cost"])
        .map_err(err)?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.stage.to_string(),
            r.accuracy.to_string(),
            r.cumulative_cost.to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| RunError::Other(e.to_string()))
}

fn out_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf> {
    opts.out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| RunError::Usage("no output directory: pass --out or set output.dir".into()))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| RunError::Other(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn apply(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<ExperimentConfig> {
    if let Some(seed) = opts.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &opts.out {
        cfg.output.dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub metrics: MetricsFile,
}

/// Runs the experiment and writes `metrics.json`, `curves.csv`,
/// `config.resolved.toml` and (unless disabled) `checkpoints/`.
pub fn run_experiment<E: Executor>(
    cfg: ExperimentConfig,
    opts: &RunOptions,
    exec: &E,
) -> Result<RunReport> {
    let cfg = apply(cfg, opts)?;
    let dir = out_dir(&cfg, opts)?;
    let (metrics, trained) = execute(&cfg, exec)?;
    write_atomic(&dir.join("config.resolved.toml"), cfg.to_toml().as_bytes())?;
    write_atomic(&dir.join("curves.csv"), &curves_csv(&metrics.records)?)?;
    if cfg.output.checkpoints {
        let ckpt = dir.join("checkpoints");
        match &trained {
            TrainedModel::Single(m) => save_model(m, &ckpt.join("model.fck"))?,
            TrainedModel::Concat { model, clusters } => {
                save_concat_model(model, clusters, &ckpt)?;
            }
        }
    }
    write_atomic(&dir.join("metrics.json"), &to_json(&metrics)?)?;
    Ok(RunReport {
        out_dir: dir,
        metrics,
    })
}

/// Writes `train.fds` and `test.fds` for a blob dataset.
pub fn generate_data(cfg: ExperimentConfig, opts: &RunOptions) -> Result<(PathBuf, PathBuf)> {
    let cfg = apply(cfg, opts)?;
    if !matches!(cfg.dataset, DatasetSpec::Blobs { .. }) {
        return Err(RunError::config(
            "dataset.kind",
            "gen-data needs a blobs dataset",
        ));
    }
    let dir = out_dir(&cfg, opts)?;
    let (train, test) = load_data(&cfg)?;
    let (a, b) = (dir.join("train.fds"), dir.join("test.fds"));
    save_dataset(&train, &a)?;
    save_dataset(&test, &b)?;
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeFile {
    pub config_hash: String,
    pub client_classes: [Vec<usize>; 2],
    pub epochs: usize,
    pub report: ExchangeReport,
}

/// The two-client encoder exchange experiment; writes `probes.json`.
pub fn run_probe(cfg: ExperimentConfig, opts: &RunOptions) -> Result<(PathBuf, ProbeFile)> {
    let cfg = apply(cfg, opts)?;
    let dir = out_dir(&cfg, opts)?;
    let spec = cfg.probe.clone().unwrap_or_default();
    let (train, test) = load_data(&cfg)?;
    let m = train.classes();
    let classes = spec
        .client_classes
        .clone()
        .unwrap_or_else(|| [(0..m / 2).collect(), (m / 2..m).collect()]);
    if let Some(&bad) = classes.iter().flatten().find(|&&c| c >= m) {
        return Err(RunError::config(
            "probe.client_classes",
            format!("class {bad} is not below {m}"),
        ));
    }
    let pick = |d: &Dataset| -> Result<[Dataset; 2]> {
        Ok([d.restrict_to(&classes[0])?, d.restrict_to(&classes[1])?])
    };
    let alg = &cfg.algorithm;
    let local = LocalSpec {
        batch_size: alg.batch_size,
        sgd: alg.sgd(),
        prox_mu: None,
    };
    let report = exchange_experiment(
        &pick(&train)?,
        &pick(&test)?,
        &alg.layer_dims(train.dim(), m),
        &local,
        spec.epochs,
        &spec.probe_config(),
        alg.seed,
    )?;
    let file = ProbeFile {
        config_hash: cfg.hash(),
        client_classes: classes,
        epochs: spec.epochs,
        report,
    };
    let path = dir.join("probes.json");
    write_atomic(&path, &to_json(&file)?)?;
    Ok((path, file))
}
