use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{ln, rng_for, SimRng};
use crate::nn::{softmax_rows, Classifier};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistSource {
    True,
    Inferred,
    DpNoised,
}

/// A client's label distribution: nonnegative, sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistVector {
    pub client_id: usize,
    pub source: DistSource,
    pub probs: Vec<f64>,
}

impl LabelDistVector {
    /// Classes with nonzero mass, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.probs.len())
            .filter(|&c| self.probs[c] > 0.0)
            .collect()
    }

    /// Indices of the `n` largest entries (ties to the lower class), ascending.
    pub fn top(&self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        let mut top = order[..n.min(order.len())].to_vec();
        top.sort_unstable();
        top
    }

    pub fn l1_distance(&self, other: &LabelDistVector) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Fraction of the client's samples in each class.
pub fn label_distribution(
    labels: &[usize],
    classes: usize,
    client_id: usize,
) -> Result<LabelDistVector> {
    if labels.is_empty() {
        return Err(Error::Argument(alloc::format!(
            "client {client_id} has no samples"
        )));
    }
    crate::nn::check_labels(labels, classes)?;
    let mut counts = vec![0usize; classes];
    labels.iter().for_each(|&y| counts[y] += 1);
    let n = labels.len() as f64;
    Ok(LabelDistVector {
        client_id,
        source: DistSource::True,
        probs: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

const PROBE_CHUNK: usize = 1024;

/// Mean softmax output of `model` over `probes` inputs drawn uniformly from
/// `[0, 1]^dim`.
pub fn infer_label_distribution<C: Classifier + ?Sized>(
    model: &C,
    probes: usize,
    dim: usize,
    seed: u64,
    client_id: usize,
) -> Result<LabelDistVector> {
    if probes == 0 {
        return Err(Error::Argument(
            "at least one probe input is required".into(),
        ));
    }
    if model.input_dim() != dim {
        return Err(Error::Dimension {
            layer: 0,
            expected: model.input_dim(),
            found: dim,
        });
    }
    let mut rng = rng_for(seed, &[0x1d1d]);
    let mut sums: Option<Vec<f64>> = None;
    let mut remaining = probes;
    while remaining > 0 {
        let rows = remaining.min(PROBE_CHUNK);
        let data = (0..rows * dim).map(|_| rng.random::<f64>()).collect();
        let p = softmax_rows(&model.logits(&Matrix::from_vec(rows, dim, data))?);
        let acc = sums.get_or_insert_with(|| vec![0.0; p.cols()]);
        for row in p.row_iter() {
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        remaining -= rows;
    }
    let r = probes as f64;
    Ok(LabelDistVector {
        client_id,
        source: DistSource::Inferred,
        probs: sums
            .unwrap_or_default()
            .into_iter()
            .map(|s| s / r)
            .collect(),
    })
}

/// Laplace mechanism for a query of L1 sensitivity `sensitivity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceMechanism {
    pub epsilon: f64,
    pub sensitivity: f64,
}

impl LaplaceMechanism {
    /// Label distributions have sensitivity 1: one added record moves at
    /// most 1 unit of L1 mass, e.g. `(1, 0) → (0.5, 0.5)`.
    pub fn for_label_distribution(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Argument("epsilon must be positive".into()));
        }
        Ok(LaplaceMechanism {
            epsilon,
            sensitivity: 1.0,
        })
    }

    /// `λ = Δf / ε`.
    pub fn scale(&self) -> f64 {
        self.sensitivity / self.epsilon
    }
}

/// One draw from `Laplace(0, scale)` by inverting the CDF.
pub fn sample_laplace(scale: f64, rng: &mut SimRng) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return -scale * u.signum() * ln(tail);
        }
    }
}

/// Adds i.i.d. `Laplace(0, 1/ε)` noise to every entry, then maps back onto
/// the simplex by clipping at zero and renormalising (uniform if nothing
/// survives the clip).
pub fn laplace_noise(dist: &LabelDistVector, epsilon: f64, seed: u64) -> Result<LabelDistVector> {
    let mech = LaplaceMechanism::for_label_distribution(epsilon)?;
    let mut rng = rng_for(seed, &[0xd9, dist.client_id as u64]);
    let scale = mech.scale();
    let mut probs: Vec<f64> = dist
        .probs
        .iter()
        .map(|&p| (p + sample_laplace(scale, &mut rng)).max(0.0))
        .collect();
    let total: f64 = probs.iter().sum();
    if total > 0.0 && total.is_finite() {
        probs.iter_mut().for_each(|p| *p /= total);
    } else {
        let u = 1.0 / probs.len() as f64;
        probs.iter_mut().for_each(|p| *p = u);
    }
    Ok(LabelDistVector {
        client_id: dist.client_id,
        source: DistSource::DpNoised,
        probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, ModelParams};

    #[test]
    fn counted_ratios() {
        let d = label_distribution(&[0, 0, 1, 0], 4, 3).unwrap();
        assert_eq!(d.probs, vec![0.75, 0.25, 0.0, 0.0]);
        assert_eq!(d.client_id, 3);
        let single = label_distribution(&[2], 4, 0).unwrap();
        assert_eq!(single.probs, vec![0.0, 0.0, 1.0, 0.0]);
        assert!(label_distribution(&[], 4, 0).is_err());
        assert!(label_distribution(&[4], 4, 0).is_err());
    }

    #[test]
    fn zero_model_infers_uniform() {
        let model = ModelParams::from_layers(vec![Layer::zeros(3, 4), Layer::zeros(4, 5)]).unwrap();
        for r in [1, 7, 2500] {
            let d = infer_label_distribution(&model, r, 3, 1, 0).unwrap();
            assert!(d.probs.iter().all(|&p| (p - 0.2).abs() < 1e-12));
            assert_eq!(d.source, DistSource::Inferred);
        }
        assert!(infer_label_distribution(&model, 10, 4, 1, 0).is_err());
        assert!(infer_label_distribution(&model, 0, 3, 1, 0).is_err());
    }

    #[test]
    fn inferred_sums_to_one() {
        let mut rng = rng_for(5, &[]);
        let model = ModelParams::init(&[6, 8, 4], &mut rng).unwrap();
        let d = infer_label_distribution(&model, 3000, 6, 2, 1).unwrap();
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn privacy_scale() {
        let mech = LaplaceMechanism::for_label_distribution(2.5).unwrap();
        assert!((mech.scale() - 0.4).abs() < 1e-15);
        assert!(LaplaceMechanism::for_label_distribution(0.0).is_err());
    }

    #[test]
    fn one_record_moves_one_unit() {
        let before = label_distribution(&[0], 2, 0).unwrap();
        let after = label_distribution(&[0, 1], 2, 0).unwrap();
        assert_eq!(after.probs, vec![0.5, 0.5]);
        assert_eq!(before.l1_distance(&after), 1.0);
    }

    #[test]
    fn vanishing_noise_keeps_input() {
        let d = label_distribution(&[0, 1, 1, 2], 4, 0).unwrap();
        let noisy = laplace_noise(&d, 1e9, 4).unwrap();
        assert_eq!(noisy.source, DistSource::DpNoised);
        for (a, b) in d.probs.iter().zip(&noisy.probs) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn noisy_output_stays_on_simplex() {
        let d = label_distribution(&[0, 1, 1, 2, 5], 6, 2).unwrap();
        for seed in 0..200 {
            let n = laplace_noise(&d, 0.05, seed).unwrap();
            assert!(n.probs.iter().all(|&p| p >= 0.0));
            assert!((n.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn top_entries() {
        let d = LabelDistVector {
            client_id: 0,
            source: DistSource::Inferred,
            probs: vec![0.1, 0.4, 0.1, 0.4],
        };
        assert_eq!(d.top(2), vec![1, 3]);
        assert_eq!(d.top(3), vec![0, 1, 3]);
    }
}
