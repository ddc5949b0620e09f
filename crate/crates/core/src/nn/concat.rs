use alloc::vec::Vec;

use super::model::{Encoder, FeatureExtractor, Layer};
use super::Classifier;
use crate::math::Fingerprint;
use crate::{Error, Matrix, Result};

/// Several encoders applied to the same input with their outputs placed
/// side by side, member `k` occupying the `k`-th column block.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalEncoder {
    members: Vec<Encoder>,
}

impl GlobalEncoder {
    pub fn members(&self) -> &[Encoder] {
        &self.members
    }

    /// Column range of member `k` inside the concatenated features.
    pub fn block(&self, k: usize) -> core::ops::Range<usize> {
        let start: usize = self.members[..k].iter().map(|e| e.feature_dim()).sum();
        start..start + self.members[k].feature_dim()
    }
}

/// Stacks encoders in the given order. All must read the same input width.
pub fn concat_encoders(encoders: &[Encoder]) -> Result<GlobalEncoder> {
    let first = encoders
        .first()
        .ok_or_else(|| Error::Config("at least one encoder is required".into()))?;
    let d = first.input_dim();
    if let Some(bad) = encoders.iter().position(|e| e.input_dim() != d) {
        return Err(Error::Config(alloc::format!(
            "encoder {bad} reads {} inputs, encoder 0 reads {d}",
            encoders[bad].input_dim()
        )));
    }
    Ok(GlobalEncoder {
        members: encoders.to_vec(),
    })
}

impl FeatureExtractor for GlobalEncoder {
    fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    fn feature_dim(&self) -> usize {
        self.members.iter().map(|e| e.feature_dim()).sum()
    }

    fn features(&self, inputs: &Matrix) -> Result<Matrix> {
        let parts = self
            .members
            .iter()
            .map(|e| e.features(inputs))
            .collect::<Result<Vec<_>>>()?;
        Ok(Matrix::hconcat(&parts))
    }

    fn fingerprint(&self) -> u64 {
        let mut fp = Fingerprint::default();
        for e in &self.members {
            fp.write_u64(e.fingerprint());
        }
        fp.finish()
    }
}

/// A concatenated encoder followed by one linear classifier over its features.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatModel {
    pub encoder: GlobalEncoder,
    pub classifier: Layer,
}

impl ConcatModel {
    pub fn new(encoder: GlobalEncoder, classifier: Layer) -> Result<Self> {
        if encoder.feature_dim() != classifier.inputs() {
            return Err(Error::Dimension {
                layer: 0,
                expected: encoder.feature_dim(),
                found: classifier.inputs(),
            });
        }
        Ok(ConcatModel {
            encoder,
            classifier,
        })
    }
}

impl Classifier for ConcatModel {
    fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn logits(&self, inputs: &Matrix) -> Result<Matrix> {
        Ok(self.classifier.forward(&self.encoder.features(inputs)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng_for;
    use crate::nn::ModelParams;

    fn encoder(dims: &[usize], seed: u64) -> Encoder {
        let mut rng = rng_for(seed, &[]);
        let mut full = dims.to_vec();
        full.push(2);
        ModelParams::init(&full, &mut rng).unwrap().split().0
    }

    fn probe() -> Matrix {
        Matrix::from_rows(&[&[0.1, 0.5, 0.9, 0.3], &[0.7, 0.2, 0.4, 0.6]])
    }

    #[test]
    fn singleton_is_the_encoder() {
        let e = encoder(&[4, 6, 3], 1);
        let g = concat_encoders(core::slice::from_ref(&e)).unwrap();
        assert_eq!(g.features(&probe()).unwrap(), e.features(&probe()).unwrap());
    }

    #[test]
    fn blocks_follow_member_order() {
        let a = encoder(&[4, 3], 1);
        let b = encoder(&[4, 6, 5], 2);
        let g = concat_encoders(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(g.feature_dim(), 8);
        assert_eq!(g.block(1), 3..8);
        let f = g.features(&probe()).unwrap();
        let fa = a.features(&probe()).unwrap();
        let fb = b.features(&probe()).unwrap();
        for r in 0..2 {
            assert_eq!(&f.row(r)[..3], fa.row(r));
            assert_eq!(&f.row(r)[3..], fb.row(r));
        }
    }

    #[test]
    fn identical_members_tile() {
        let e = encoder(&[4, 5, 3], 7);
        let g = concat_encoders(&vec![e.clone(); 5]).unwrap();
        let f = g.features(&probe()).unwrap();
        let one = e.features(&probe()).unwrap();
        for r in 0..2 {
            for k in 0..5 {
                assert_eq!(&f.row(r)[k * 3..(k + 1) * 3], one.row(r));
            }
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let a = encoder(&[4, 3], 1);
        let b = encoder(&[5, 3], 2);
        assert!(matches!(concat_encoders(&[a, b]), Err(Error::Config(_))));
        assert!(matches!(concat_encoders(&[]), Err(Error::Config(_))));
    }
}
