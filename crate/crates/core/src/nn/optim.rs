use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::loss::loss_ce;
use super::model::{Batch, GradScope, Layer, ModelParams};
use crate::{Error, Result};

/// Hyperparameters of momentum SGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-5,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning_rate must be a finite nonnegative number".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Momentum SGD with classic (coupled) weight decay:
/// `v ← μ·v + (g + λ·w)`, `w ← w − η·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: SgdConfig,
    velocity: Vec<Layer>,
}

impl OptimizerState {
    pub fn new(config: SgdConfig, model: &ModelParams) -> Self {
        OptimizerState {
            config,
            velocity: zeros_like(model),
        }
    }

    pub fn velocity(&self) -> &[Layer] {
        &self.velocity
    }

    fn matches(&self, model: &ModelParams) -> bool {
        self.velocity.len() == model.layers().len()
            && self
                .velocity
                .iter()
                .zip(model.layers())
                .all(|(v, l)| v.same_shape(l))
    }

    /// One update on `batch`. Returns the batch loss before the update.
    ///
    /// With `freeze_encoder` only the last layer moves; encoder parameters
    /// and their velocities are not touched.
    pub fn step(
        &mut self,
        model: &mut ModelParams,
        batch: &Batch,
        freeze_encoder: bool,
    ) -> Result<f64> {
        self.step_with_prox(model, batch, freeze_encoder, None)
    }

    /// As [`step`](Self::step), adding the proximal gradient `mu·(w − w_ref)` when
    /// `prox = Some((w_ref, mu))`.
    pub fn step_with_prox(
        &mut self,
        model: &mut ModelParams,
        batch: &Batch,
        freeze_encoder: bool,
        prox: Option<(&ModelParams, f64)>,
    ) -> Result<f64> {
        let scope = if freeze_encoder {
            GradScope::ClassifierOnly
        } else {
            GradScope::All
        };
        let (loss, grads) = model.gradients(batch, scope)?;
        self.apply(model, grads, freeze_encoder, prox)?;
        Ok(loss)
    }

    /// Applies precomputed loss gradients.
    pub fn apply(
        &mut self,
        model: &mut ModelParams,
        mut grads: Vec<Layer>,
        freeze_encoder: bool,
        prox: Option<(&ModelParams, f64)>,
    ) -> Result<()> {
        if !self.matches(model) {
            self.velocity = zeros_like(model);
        }
        if let Some((reference, _)) = prox {
            if !reference.same_shape(model) {
                return Err(Error::Argument(
                    "proximal reference has a different shape".into(),
                ));
            }
        }
        let SgdConfig {
            learning_rate: lr,
            momentum,
            weight_decay,
        } = self.config;
        let last = grads.len() - 1;
        let first = if freeze_encoder { last } else { 0 };
        for li in first..=last {
            let g = &mut grads[li];
            let params = &model.layers()[li];
            g.zip_apply(params, |gv, w| *gv += weight_decay * w);
            if let Some((reference, mu)) = prox {
                let r = &reference.layers()[li];
                g.weights
                    .as_mut_slice()
                    .iter_mut()
                    .zip(params.weights.as_slice().iter().zip(r.weights.as_slice()))
                    .for_each(|(gv, (w, wr))| *gv += mu * (w - wr));
                g.bias
                    .iter_mut()
                    .zip(params.bias.iter().zip(&r.bias))
                    .for_each(|(gv, (w, wr))| *gv += mu * (w - wr));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite { layer: li });
            }
            let v = &mut self.velocity[li];
            v.zip_apply(g, |vv, gv| *vv = momentum * *vv + gv);
            model.layers_mut()[li].zip_apply(v, |w, vv| *w -= lr * vv);
        }
        Ok(())
    }
}

fn zeros_like(model: &ModelParams) -> Vec<Layer> {
    model
        .layers()
        .iter()
        .map(|l| Layer::zeros(l.inputs(), l.outputs()))
        .collect()
}

/// Value-returning form of [`OptimizerState::step`].
pub fn sgd_step(
    model: &ModelParams,
    opt: &OptimizerState,
    batch: &Batch,
    freeze_encoder: bool,
) -> Result<(ModelParams, OptimizerState)> {
    let mut model = model.clone();
    let mut opt = opt.clone();
    opt.step(&mut model, batch, freeze_encoder)?;
    Ok((model, opt))
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences, over every parameter.
///
/// Relative error is `|a − n| / max(|a| + |n|, 1e-6)`; the floor keeps
/// parameters with vanishing gradient from dominating through round-off.
pub fn gradient_check(model: &ModelParams, batch: &Batch, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::Argument("epsilon must lie in (0, 1e-2]".into()));
    }
    let (_, grads) = model.gradients(batch, GradScope::All)?;
    let loss_at = |m: &ModelParams| -> Result<f64> {
        loss_ce(&m.forward(batch.inputs())?.logits, batch.labels())
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for li in 0..grads.len() {
        let n_weights = grads[li].weights.as_slice().len();
        for pi in 0..n_weights + grads[li].bias.len() {
            let analytic = if pi < n_weights {
                grads[li].weights.as_slice()[pi]
            } else {
                grads[li].bias[pi - n_weights]
            };
            let original = get_param(&probe, li, pi, n_weights);
            set_param(&mut probe, li, pi, n_weights, original + epsilon);
            let up = loss_at(&probe)?;
            set_param(&mut probe, li, pi, n_weights, original - epsilon);
            let down = loss_at(&probe)?;
            set_param(&mut probe, li, pi, n_weights, original);
            let numeric = (up - down) / (2.0 * epsilon);
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn get_param(m: &ModelParams, layer: usize, index: usize, n_weights: usize) -> f64 {
    let l = &m.layers()[layer];
    if index < n_weights {
        l.weights.as_slice()[index]
    } else {
        l.bias[index - n_weights]
    }
}

fn set_param(m: &mut ModelParams, layer: usize, index: usize, n_weights: usize, value: f64) {
    let l = &mut m.layers_mut()[layer];
    if index < n_weights {
        l.weights.as_mut_slice()[index] = value;
    } else {
        l.bias[index - n_weights] = value;
    }
}
