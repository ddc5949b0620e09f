use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;

use super::streams;
use crate::math::{ceil_tolerant, rng_for};
use crate::nn::{Layer, ModelParams};
use crate::{Error, Result};

/// Parameter-wise mean with weights `w_i / Σw`, accumulated in index order.
pub fn weighted_average(models: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let first = models
        .first()
        .ok_or_else(|| Error::Argument("nothing to average".into()))?;
    if let Some(bad) = models.iter().position(|m| !m.same_shape(first)) {
        return Err(Error::Aggregation {
            client: bad,
            reason: format!(
                "layer dims {:?} differ from {:?}",
                models[bad].layer_dims(),
                first.layer_dims()
            ),
        });
    }
    let layers: Vec<Vec<Layer>> = models.iter().map(|m| m.layers().to_vec()).collect();
    let merged = (0..first.layers().len())
        .map(|li| {
            let column: Vec<&Layer> = layers.iter().map(|l| &l[li]).collect();
            average_refs(&column, weights)
        })
        .collect::<Result<Vec<_>>>()?;
    ModelParams::from_layers(merged)
}

/// [`weighted_average`] for single layers.
pub fn average_layers(layers: &[Layer], weights: &[f64]) -> Result<Layer> {
    let refs: Vec<&Layer> = layers.iter().collect();
    average_refs(&refs, weights)
}

fn average_refs(layers: &[&Layer], weights: &[f64]) -> Result<Layer> {
    if layers.len() != weights.len() || layers.is_empty() {
        return Err(Error::Argument(format!(
            "{} models but {} weights",
            layers.len(),
            weights.len()
        )));
    }
    if let Some(bad) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Aggregation {
            client: bad,
            reason: format!("weight {} is not positive", weights[bad]),
        });
    }
    if let Some(bad) = layers.iter().position(|l| !l.same_shape(layers[0])) {
        return Err(Error::Aggregation {
            client: bad,
            reason: "layer shape differs".into(),
        });
    }
    let total: f64 = weights.iter().sum();
    // start from the first term so a single model passes through bit-exact
    let mut acc = layers[0].clone();
    let w0 = weights[0] / total;
    acc.zip_apply(layers[0], |a, _| *a *= w0);
    for (l, &w) in layers.iter().zip(weights).skip(1) {
        let share = w / total;
        acc.zip_apply(l, |a, v| *a += share * v);
    }
    Ok(acc)
}

/// `⌈fraction·n⌉` distinct clients drawn uniformly for `(seed, round)`,
/// returned in ascending order. `fraction = 1` returns everyone.
pub fn sample_participants(n: usize, fraction: f64, round: usize, seed: u64) -> Vec<usize> {
    let count = ceil_tolerant(fraction * n as f64).clamp(usize::from(n > 0), n);
    if count == n {
        return (0..n).collect();
    }
    let mut rng = rng_for(seed, &[streams::PARTICIPANTS, round as u64]);
    let mut picked = index::sample(&mut rng, n, count).into_vec();
    picked.sort_unstable();
    picked
}
