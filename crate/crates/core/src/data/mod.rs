//! Labelled datasets, the synthetic blob generator and label-skew partitioners.

mod blobs;
mod partition;

pub use blobs::{gen_blobs, BlobSpec};
pub use partition::{
    partition_classes, partition_dirichlet, partition_iid, FederatedPartition, PartitionKind,
    MIN_CLIENT_SIZE,
};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::math::rng_for;
use crate::nn::check_labels as loss_check_labels;
use crate::{Error, Matrix, Result};

/// Feature rows with class labels in `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Argument(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if inputs.rows() == 0 {
            return Err(Error::Argument(
                "dataset must contain at least one sample".into(),
            ));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::Argument(format!(
                "{} feature rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        loss_check_labels(&labels, classes)?;
        Ok(Dataset {
            inputs,
            labels,
            classes,
        })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The listed rows, in order, as a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Argument(format!("row index {bad} out of range")));
        }
        Dataset::new(
            self.inputs.gather_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.classes,
        )
    }

    /// Rows whose label is one of `classes`.
    pub fn restrict_to(&self, classes: &[usize]) -> Result<Dataset> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        self.subset(&idx)
    }

    /// Per-class sample counts over the given rows.
    pub fn class_counts(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &i in indices {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    /// Row indices of each class, in dataset order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.classes];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }

    /// Moves a seeded random `test_per_class` rows of every class into a
    /// second dataset. Classes with too few rows are an error.
    pub fn stratified_split(&self, test_per_class: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (c, mut idx) in self.indices_by_class().into_iter().enumerate() {
            if idx.len() <= test_per_class {
                return Err(Error::Argument(format!(
                    "class {c} has {} rows, cannot hold out {test_per_class}",
                    idx.len()
                )));
            }
            idx.shuffle(&mut rng_for(seed, &[0x5b17, c as u64]));
            test.extend_from_slice(&idx[..test_per_class]);
            train.extend_from_slice(&idx[test_per_class..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train)?, self.subset(&test)?))
    }
}
