use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::loss::{check_labels, loss_ce, softmax_rows};
use super::Classifier;
use crate::math::{sqrt, Fingerprint, SimRng};
use crate::{Error, Matrix, Result};

/// One affine map `x ↦ x·W + b`, with `W` stored as `inputs × outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.cols() != bias.len() {
            return Err(Error::Dimension {
                layer: 0,
                expected: weights.cols(),
                found: bias.len(),
            });
        }
        Ok(Layer { weights, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            weights: Matrix::zeros(inputs, outputs),
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut SimRng) -> Self {
        let a = sqrt(6.0 / (inputs + outputs) as f64);
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-a..=a))
            .collect();
        Layer {
            weights: Matrix::from_vec(inputs, outputs, data),
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    pub fn forward(&self, inputs: &Matrix) -> Matrix {
        inputs.affine(&self.weights, &self.bias)
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.weights
            .as_slice()
            .iter()
            .chain(&self.bias)
            .all(|v| v.is_finite())
    }

    pub(crate) fn same_shape(&self, other: &Layer) -> bool {
        self.inputs() == other.inputs() && self.outputs() == other.outputs()
    }

    pub(crate) fn hash_into(&self, fp: &mut Fingerprint) {
        fp.write_u64(self.inputs() as u64);
        fp.write_u64(self.outputs() as u64);
        fp.write_f64s(self.weights.as_slice());
        fp.write_f64s(&self.bias);
    }

    /// Applies `f(param, other)` to every parameter, pairing with `other` (same shape).
    pub(crate) fn zip_apply(&mut self, other: &Layer, mut f: impl FnMut(&mut f64, f64)) {
        for (p, &o) in self
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(other.weights.as_slice())
        {
            f(p, o);
        }
        for (p, &o) in self.bias.iter_mut().zip(&other.bias) {
            f(p, o);
        }
    }
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn check_width(layer: usize, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            layer,
            expected,
            found,
        })
    }
}

/// Labelled rows for one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Matrix,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::Argument(
                "batch must contain at least one row".into(),
            ));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::Argument(format!(
                "batch has {} rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        check_labels(&labels, classes)?;
        Ok(Batch { inputs, labels })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Output of [`ModelParams::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// Activations entering the last layer (`n × h`).
    pub features: Matrix,
    /// Last-layer affine output (`n × m`).
    pub logits: Matrix,
}

/// Which parameters receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradScope {
    All,
    /// Only the last layer; encoder gradients are reported as zero.
    ClassifierOnly,
}

/// Parameters of a dense network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<Layer>,
}

impl ModelParams {
    /// Builds a seeded network for `layer_dims = [d, hidden..., m]`.
    pub fn init(layer_dims: &[usize], rng: &mut SimRng) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Config(format!(
                "layer_dims must list at least two positive widths, got {layer_dims:?}"
            )));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], rng))
            .collect();
        Ok(ModelParams { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a model needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            check_width(i, l.outputs(), l.bias.len())?;
            if i > 0 {
                check_width(i, layers[i - 1].outputs(), l.inputs())?;
            }
        }
        Ok(ModelParams { layers })
    }

    /// Recombines an encoder and a classifier layer.
    pub fn from_parts(encoder: Encoder, classifier: Layer) -> Result<Self> {
        check_width(
            encoder.layers.len(),
            encoder.feature_dim(),
            classifier.inputs(),
        )?;
        let mut layers = encoder.layers;
        layers.push(classifier);
        ModelParams::from_layers(layers)
    }

    /// Splits into the encoder (all layers but the last) and the classifier.
    pub fn split(self) -> (Encoder, Layer) {
        let input_dim = self.input_dim();
        let mut layers = self.layers;
        let classifier = layers.pop().expect("model has at least one layer");
        (Encoder { input_dim, layers }, classifier)
    }

    pub fn encoder(&self) -> Encoder {
        Encoder {
            input_dim: self.input_dim(),
            layers: self.layers[..self.layers.len() - 1].to_vec(),
        }
    }

    pub fn classifier(&self) -> &Layer {
        self.layers.last().expect("model has at least one layer")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Layer::outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn classes(&self) -> usize {
        self.classifier().outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.same_shape(b))
    }

    pub fn fingerprint(&self) -> u64 {
        let mut fp = Fingerprint::default();
        for l in &self.layers {
            l.hash_into(&mut fp);
        }
        fp.finish()
    }

    /// Forward pass returning both the penultimate activations and the logits.
    pub fn forward(&self, inputs: &Matrix) -> Result<Forward> {
        check_width(0, self.input_dim(), inputs.cols())?;
        let last = self.layers.len() - 1;
        let mut features = inputs.clone();
        for l in &self.layers[..last] {
            features = l.forward(&features);
            relu_in_place(&mut features);
        }
        let logits = self.layers[last].forward(&features);
        Ok(Forward { features, logits })
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    ///
    /// With [`GradScope::ClassifierOnly`] the encoder entries of the returned
    /// gradient are zero and backpropagation stops at the last layer.
    pub fn gradients(&self, batch: &Batch, scope: GradScope) -> Result<(f64, Vec<Layer>)> {
        check_width(0, self.input_dim(), batch.inputs.cols())?;
        check_labels(&batch.labels, self.classes())?;
        let n = batch.len() as f64;
        let last = self.layers.len() - 1;

        // acts[l] is the input to layer l
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(batch.inputs.clone());
        for l in &self.layers[..last] {
            let mut a = l.forward(acts.last().unwrap());
            relu_in_place(&mut a);
            acts.push(a);
        }
        let logits = self.layers[last].forward(&acts[last]);
        let loss = loss_ce(&logits, &batch.labels)?;

        let mut delta = softmax_rows(&logits);
        for (r, &y) in batch.labels.iter().enumerate() {
            delta[(r, y)] -= 1.0;
        }
        for v in delta.as_mut_slice() {
            *v /= n;
        }

        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer::zeros(l.inputs(), l.outputs()))
            .collect();
        let lowest = match scope {
            GradScope::All => 0,
            GradScope::ClassifierOnly => last,
        };
        for li in (lowest..=last).rev() {
            let g = &mut grads[li];
            acts[li].add_transpose_mul(&delta, &mut g.weights);
            for row in delta.row_iter() {
                for (b, &d) in g.bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if li > lowest {
                let mut prev = delta.mul_transpose(&self.layers[li].weights);
                for (p, &a) in prev.as_mut_slice().iter_mut().zip(acts[li].as_slice()) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        if let Some(layer) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { layer });
        }
        Ok((loss, grads))
    }
}

impl Classifier for ModelParams {
    fn input_dim(&self) -> usize {
        ModelParams::input_dim(self)
    }

    fn logits(&self, inputs: &Matrix) -> Result<Matrix> {
        Ok(self.forward(inputs)?.logits)
    }
}

/// Maps raw inputs to a feature representation.
pub trait FeatureExtractor {
    fn input_dim(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn features(&self, inputs: &Matrix) -> Result<Matrix>;
    /// Content hash of every parameter.
    fn fingerprint(&self) -> u64;
}

/// All layers of a network except the classifier, each followed by a ReLU.
/// An encoder with no layers is the identity map.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl Encoder {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn from_layers(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut width = input_dim;
        for (i, l) in layers.iter().enumerate() {
            check_width(i, width, l.inputs())?;
            check_width(i, l.outputs(), l.bias.len())?;
            width = l.outputs();
        }
        Ok(Encoder { input_dim, layers })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }
}

impl FeatureExtractor for Encoder {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn feature_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Layer::outputs)
    }

    fn features(&self, inputs: &Matrix) -> Result<Matrix> {
        check_width(0, self.input_dim, inputs.cols())?;
        let mut x = inputs.clone();
        for l in &self.layers {
            x = l.forward(&x);
            relu_in_place(&mut x);
        }
        Ok(x)
    }

    fn fingerprint(&self) -> u64 {
        let mut fp = Fingerprint::default();
        fp.write_u64(self.input_dim as u64);
        for l in &self.layers {
            l.hash_into(&mut fp);
        }
        fp.finish()
    }
}
