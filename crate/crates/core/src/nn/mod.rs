//! Dense feed-forward networks with rectifier hidden layers.
//!
//! A [`ModelParams`] is a stack of affine [`Layer`]s. Every layer except the
//! last is followed by a ReLU; the last layer produces logits. The layers
//! before the last form the [`Encoder`], the last one is the classifier.

mod concat;
mod loss;
mod model;
mod optim;

pub use concat::{concat_encoders, ConcatModel, GlobalEncoder};
pub use loss::{check_labels, loss_ce, softmax_rows};
pub use model::{Batch, Encoder, FeatureExtractor, Forward, GradScope, Layer, ModelParams};
pub use optim::{gradient_check, sgd_step, OptimizerState, SgdConfig};

use crate::{Error, Matrix, Result};

/// Anything that maps an input matrix to per-row class logits.
pub trait Classifier {
    fn input_dim(&self) -> usize;
    fn logits(&self, inputs: &Matrix) -> Result<Matrix>;
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax logit equals the label.
pub fn evaluate<C: Classifier + ?Sized>(
    model: &C,
    inputs: &Matrix,
    labels: &[usize],
) -> Result<f64> {
    if inputs.rows() == 0 {
        return Err(Error::Argument(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    if labels.len() != inputs.rows() {
        return Err(Error::Argument("label count differs from row count".into()));
    }
    let logits = model.logits(inputs)?;
    let correct = logits
        .row_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}
