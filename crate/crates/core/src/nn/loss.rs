use alloc::vec::Vec;

use crate::math::{exp, ln};
use crate::{Error, Matrix, Result};

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&v| exp(v - max)).sum();
    max + ln(sum)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Fails on the first label that is not below `classes`.
pub fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().position(|&y| y >= classes) {
        Some(row) => Err(Error::LabelOutOfRange {
            row,
            label: labels[row],
            classes,
        }),
        None => Ok(()),
    }
}

/// Mean softmax cross-entropy of the true classes.
pub fn loss_ce(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != logits.rows() || labels.is_empty() {
        return Err(Error::Argument("loss needs one label per logit row".into()));
    }
    check_labels(labels, logits.cols())?;
    let per_row: Vec<f64> = logits
        .row_iter()
        .zip(labels)
        .map(|(row, &y)| log_sum_exp(row) - row[y])
        .collect();
    let mean = per_row.iter().sum::<f64>() / labels.len() as f64;
    // log-sum-exp is never below the true-class logit; clamp rounding residue
    Ok(mean.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_m() {
        let logits = Matrix::zeros(3, 10);
        let loss = loss_ce(&logits, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn saturated_true_class() {
        let mut logits = Matrix::zeros(2, 10);
        logits[(0, 3)] = 50.0;
        logits[(1, 7)] = 50.0;
        assert!(loss_ce(&logits, &[3, 7]).unwrap() < 1e-20);
    }

    #[test]
    fn matches_scalar_log_sum_exp() {
        let logits =
            Matrix::from_rows(&[&[0.5, -1.0, 2.0], &[3.0, 3.0, -4.0], &[-0.25, 0.75, 0.0]]);
        let labels = [2, 0, 1];
        let oracle: f64 = (0..3)
            .map(|r| {
                let row = logits.row(r);
                let s: f64 = row.iter().map(|v| v.exp()).sum();
                s.ln() - row[labels[r]]
            })
            .sum::<f64>()
            / 3.0;
        assert!((loss_ce(&logits, &labels).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn label_out_of_range() {
        let logits = Matrix::zeros(2, 3);
        assert_eq!(
            loss_ce(&logits, &[0, 3]),
            Err(Error::LabelOutOfRange {
                row: 1,
                label: 3,
                classes: 3
            })
        );
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Matrix::from_rows(&[&[1000.0, 0.0, -1000.0], &[1.0, 2.0, 3.0]]);
        let p = softmax_rows(&logits);
        for row in p.row_iter() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_eq!(p[(0, 0)], 1.0);
    }
}
