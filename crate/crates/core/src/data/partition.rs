use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::math::{floor, rng_for};
use crate::{Error, Result};

/// Smallest number of samples any client may hold.
pub const MIN_CLIENT_SIZE: usize = 10;

const MAX_ASSIGNMENT_ATTEMPTS: u64 = 1000;
const MAX_DIRICHLET_ATTEMPTS: u64 = 100;

const STREAM_CLASSES: u64 = 0xc1a5;
const STREAM_SHARDS: u64 = 0x5a4d;
const STREAM_DIRICHLET: u64 = 0xd1c1;
const STREAM_IID: u64 = 0x11d0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PartitionKind {
    /// Every client holds exactly `k` distinct labels.
    ClassesPerClient {
        k: usize,
    },
    /// Per-class client proportions drawn from a symmetric Dirichlet.
    Dirichlet {
        beta: f64,
    },
    Iid,
}

/// Disjoint row-index sets, one per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedPartition {
    pub clients: Vec<Vec<usize>>,
    pub kind: PartitionKind,
    pub seed: u64,
}

impl FederatedPartition {
    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    /// Distinct labels held by client `i`, ascending.
    pub fn label_support(&self, ds: &Dataset, i: usize) -> Vec<usize> {
        ds.class_counts(&self.clients[i])
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(c, _)| c)
            .collect()
    }
}

fn check_sizes(clients: &[Vec<usize>]) -> Result<()> {
    match clients.iter().position(|c| c.len() < MIN_CLIENT_SIZE) {
        Some(i) => Err(Error::Config(format!(
            "client {i} received {} samples, fewer than the minimum of {MIN_CLIENT_SIZE}",
            clients[i].len()
        ))),
        None => Ok(()),
    }
}

/// Assigns every client `k` distinct classes and splits each class's rows
/// into equal contiguous shards among its owners.
///
/// The class assignment is redrawn until every class has an owner. Within a
/// class, rows are shuffled once and cut into shards in ascending owner
/// order; the first `n mod owners` owners receive one extra row.
pub fn partition_classes(
    ds: &Dataset,
    clients: usize,
    k: usize,
    seed: u64,
) -> Result<FederatedPartition> {
    let m = ds.classes();
    if clients == 0 || k == 0 || k > m {
        return Err(Error::Config(format!(
            "classes-per-client needs 1 <= k <= {m} and at least one client"
        )));
    }
    if clients * k < m {
        return Err(Error::Config(format!(
            "{clients} clients with {k} classes each cannot cover {m} classes"
        )));
    }
    let owned = (0..MAX_ASSIGNMENT_ATTEMPTS)
        .map(|attempt| {
            let mut rng = rng_for(seed, &[STREAM_CLASSES, attempt]);
            (0..clients)
                .map(|_| {
                    let mut cls = index::sample(&mut rng, m, k).into_vec();
                    cls.sort_unstable();
                    cls
                })
                .collect::<Vec<_>>()
        })
        .find(|owned| {
            let mut covered = vec![false; m];
            owned.iter().flatten().for_each(|&c| covered[c] = true);
            covered.iter().all(|&c| c)
        })
        .ok_or_else(|| {
            Error::Config(format!(
                "no covering class assignment found in {MAX_ASSIGNMENT_ATTEMPTS} attempts"
            ))
        })?;

    let mut parts = vec![Vec::new(); clients];
    for (c, mut rows) in ds.indices_by_class().into_iter().enumerate() {
        let owners: Vec<usize> = (0..clients).filter(|&i| owned[i].contains(&c)).collect();
        rows.shuffle(&mut rng_for(seed, &[STREAM_SHARDS, c as u64]));
        let base = rows.len() / owners.len();
        let extra = rows.len() % owners.len();
        let mut start = 0;
        for (j, &owner) in owners.iter().enumerate() {
            let len = base + usize::from(j < extra);
            if len == 0 {
                return Err(Error::Config(format!(
                    "class {c} has {} samples for {} owners",
                    rows.len(),
                    owners.len()
                )));
            }
            parts[owner].extend_from_slice(&rows[start..start + len]);
            start += len;
        }
    }
    check_sizes(&parts)?;
    Ok(FederatedPartition {
        clients: parts,
        kind: PartitionKind::ClassesPerClient { k },
        seed,
    })
}

/// Splits every class across clients by proportions drawn from
/// `Dir(beta·1)`, redrawing the whole allocation until every client has at
/// least [`MIN_CLIENT_SIZE`] rows.
pub fn partition_dirichlet(
    ds: &Dataset,
    clients: usize,
    beta: f64,
    seed: u64,
) -> Result<FederatedPartition> {
    if clients == 0 {
        return Err(Error::Config("at least one client is required".into()));
    }
    let gamma = Gamma::new(beta, 1.0)
        .map_err(|_| Error::Config(format!("dirichlet beta must be positive, got {beta}")))?;
    let by_class = ds.indices_by_class();
    'attempt: for attempt in 0..MAX_DIRICHLET_ATTEMPTS {
        let mut rng = rng_for(seed, &[STREAM_DIRICHLET, attempt]);
        let mut parts = vec![Vec::new(); clients];
        for rows in &by_class {
            let draws: Vec<f64> = (0..clients).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                continue 'attempt;
            }
            let mut rows = rows.clone();
            rows.shuffle(&mut rng);
            let n = rows.len();
            let mut cum = 0.0;
            let mut start = 0;
            for (i, d) in draws.iter().enumerate() {
                let end = if i + 1 == clients {
                    n
                } else {
                    cum += d / total;
                    (floor(cum * n as f64) as usize).clamp(start, n)
                };
                parts[i].extend_from_slice(&rows[start..end]);
                start = end;
            }
        }
        if check_sizes(&parts).is_ok() {
            return Ok(FederatedPartition {
                clients: parts,
                kind: PartitionKind::Dirichlet { beta },
                seed,
            });
        }
    }
    Err(Error::Config(format!(
        "dirichlet partition left a client below {MIN_CLIENT_SIZE} samples in \
         {MAX_DIRICHLET_ATTEMPTS} draws; use a larger dataset or a larger beta"
    )))
}

/// Uniform random split into near-equal parts.
pub fn partition_iid(ds: &Dataset, clients: usize, seed: u64) -> Result<FederatedPartition> {
    if clients == 0 {
        return Err(Error::Config("at least one client is required".into()));
    }
    let mut rows: Vec<usize> = (0..ds.len()).collect();
    rows.shuffle(&mut rng_for(seed, &[STREAM_IID]));
    let base = rows.len() / clients;
    let extra = rows.len() % clients;
    let mut start = 0;
    let parts: Vec<Vec<usize>> = (0..clients)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let part = rows[start..start + len].to_vec();
            start += len;
            part
        })
        .collect();
    check_sizes(&parts)?;
    Ok(FederatedPartition {
        clients: parts,
        kind: PartitionKind::Iid,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;

    fn assert_disjoint(p: &FederatedPartition, n: usize) {
        let mut seen = vec![false; n];
        for c in &p.clients {
            for &i in c {
                assert!(!seen[i], "row {i} assigned twice");
                seen[i] = true;
            }
        }
    }

    #[test]
    fn two_classes_per_client_cover_everything() {
        let ds = gen_blobs(10, 4, 100, 0.1, 0).unwrap();
        let p = partition_classes(&ds, 40, 2, 7).unwrap();
        assert_disjoint(&p, ds.len());
        let mut covered = [false; 10];
        for i in 0..40 {
            let support = p.label_support(&ds, i);
            assert_eq!(support.len(), 2);
            support.iter().for_each(|&c| covered[c] = true);
        }
        assert!(covered.iter().all(|&c| c));
        // every row lands somewhere
        assert_eq!(p.clients.iter().map(Vec::len).sum::<usize>(), ds.len());
    }

    #[test]
    fn single_client_takes_all() {
        let ds = gen_blobs(3, 2, 10, 0.1, 0).unwrap();
        let p = partition_classes(&ds, 1, 3, 0).unwrap();
        let mut rows = p.clients[0].clone();
        rows.sort_unstable();
        assert_eq!(rows, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn shard_sizes_match_recount() {
        let ds = gen_blobs(4, 2, 100, 0.1, 3).unwrap();
        let p = partition_classes(&ds, 2, 2, 11).unwrap();
        // recount: each class's owners split its 100 rows equally, remainder first
        let supports: Vec<Vec<usize>> = (0..2).map(|i| p.label_support(&ds, i)).collect();
        for c in 0..4 {
            let owners: Vec<usize> = (0..2).filter(|&i| supports[i].contains(&c)).collect();
            assert!(!owners.is_empty());
            for (j, &o) in owners.iter().enumerate() {
                let expect = 100 / owners.len() + usize::from(j < 100 % owners.len());
                assert_eq!(ds.class_counts(&p.clients[o])[c], expect);
            }
        }
    }

    #[test]
    fn infeasible_assignment_is_rejected() {
        let ds = gen_blobs(10, 2, 20, 0.1, 0).unwrap();
        assert!(matches!(
            partition_classes(&ds, 4, 2, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            partition_classes(&ds, 4, 11, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dirichlet_conserves_class_counts() {
        let ds = gen_blobs(5, 2, 200, 0.1, 0).unwrap();
        let p = partition_dirichlet(&ds, 10, 0.5, 3).unwrap();
        assert_disjoint(&p, ds.len());
        let mut per_class = vec![0; 5];
        for c in &p.clients {
            assert!(c.len() >= MIN_CLIENT_SIZE);
            for (k, n) in ds.class_counts(c).into_iter().enumerate() {
                per_class[k] += n;
            }
        }
        assert_eq!(per_class, vec![200; 5]);
        assert_eq!(p, partition_dirichlet(&ds, 10, 0.5, 3).unwrap());
    }

    #[test]
    fn huge_beta_is_nearly_uniform() {
        let ds = gen_blobs(10, 2, 500, 0.1, 0).unwrap();
        let p = partition_dirichlet(&ds, 40, 1e6, 1).unwrap();
        for c in &p.clients {
            let counts = ds.class_counts(c);
            for n in counts {
                assert!((n as f64 / c.len() as f64 - 0.1).abs() < 0.02);
            }
        }
    }

    fn median_entropy(ds: &Dataset, p: &FederatedPartition) -> f64 {
        let mut h: Vec<f64> = p
            .clients
            .iter()
            .map(|c| {
                let n = c.len() as f64;
                ds.class_counts(c)
                    .into_iter()
                    .filter(|&k| k > 0)
                    .map(|k| {
                        let q = k as f64 / n;
                        -q * q.ln()
                    })
                    .sum()
            })
            .collect();
        h.sort_by(f64::total_cmp);
        (h[h.len() / 2 - 1] + h[h.len() / 2]) / 2.0
    }

    #[test]
    fn smaller_beta_means_more_skew() {
        let ds = gen_blobs(10, 2, 500, 0.1, 0).unwrap();
        for seed in 0..3 {
            let sharp = partition_dirichlet(&ds, 40, 0.1, seed).unwrap();
            let soft = partition_dirichlet(&ds, 40, 0.5, seed).unwrap();
            assert!(median_entropy(&ds, &sharp) < median_entropy(&ds, &soft));
        }
    }

    #[test]
    fn impossible_minimum_size_errors() {
        let ds = gen_blobs(2, 2, 10, 0.1, 0).unwrap();
        assert!(matches!(
            partition_dirichlet(&ds, 5, 0.1, 0),
            Err(Error::Config(_))
        ));
        assert!(partition_dirichlet(&ds, 2, 0.0, 0).is_err());
    }

    #[test]
    fn iid_split() {
        let ds = gen_blobs(2, 2, 25, 0.1, 0).unwrap();
        let p = partition_iid(&ds, 4, 0).unwrap();
        assert_disjoint(&p, 50);
        assert_eq!(
            p.clients.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![13, 13, 12, 12]
        );
    }
}
