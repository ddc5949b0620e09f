use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::math::{rng_for, SimRng};
use crate::{Error, Matrix, Result};

const CENTERS: u64 = 0xb10b_0000;
const TRAIN: u64 = 1;
const TEST: u64 = 2;

/// Isotropic Gaussian classes around seeded centres in `[0, 1]^dim`,
/// clipped to the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub spread: f64,
    pub seed: u64,
}

impl BlobSpec {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.dim < 2 || self.per_class < 1 {
            return Err(Error::Argument(
                "blobs need classes >= 2, dim >= 2 and per_class >= 1".into(),
            ));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::Argument("spread must be positive".into()));
        }
        Ok(())
    }

    fn centers(&self) -> Vec<Vec<f64>> {
        let mut rng = rng_for(self.seed, &[CENTERS]);
        (0..self.classes)
            .map(|_| (0..self.dim).map(|_| rng.random::<f64>()).collect())
            .collect()
    }

    fn sample(&self, centers: &[Vec<f64>], per_class: usize, rng: &mut SimRng) -> Result<Dataset> {
        let mut data = Vec::with_capacity(self.classes * per_class * self.dim);
        let mut labels = Vec::with_capacity(self.classes * per_class);
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per_class {
                for &mu in center {
                    let z: f64 = StandardNormal.sample(rng);
                    data.push((mu + self.spread * z).clamp(0.0, 1.0));
                }
                labels.push(c);
            }
        }
        Dataset::new(
            Matrix::from_vec(labels.len(), self.dim, data),
            labels,
            self.classes,
        )
    }

    /// `per_class` samples of every class, class-major order.
    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let centers = self.centers();
        self.sample(
            &centers,
            self.per_class,
            &mut rng_for(self.seed, &[CENTERS, TRAIN]),
        )
    }

    /// The training set of [`generate`](Self::generate) plus an independent
    /// held-out set drawn around the same centres.
    pub fn generate_with_test(&self, test_per_class: usize) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        if test_per_class == 0 {
            return Err(Error::Argument("test_per_class must be positive".into()));
        }
        let centers = self.centers();
        let train = self.sample(
            &centers,
            self.per_class,
            &mut rng_for(self.seed, &[CENTERS, TRAIN]),
        )?;
        let test = self.sample(
            &centers,
            test_per_class,
            &mut rng_for(self.seed, &[CENTERS, TEST]),
        )?;
        Ok((train, test))
    }
}

/// Shorthand for [`BlobSpec::generate`].
pub fn gen_blobs(
    classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    BlobSpec {
        classes,
        dim,
        per_class,
        spread,
        seed,
    }
    .generate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_counts() {
        let ds = gen_blobs(2, 3, 5, 0.1, 0).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.class_counts(&(0..10).collect::<Vec<_>>()), vec![5, 5]);
    }

    #[test]
    fn vanishing_spread_collapses_to_centres() {
        let ds = gen_blobs(3, 4, 6, 1e-300, 2).unwrap();
        for c in 0..3 {
            let first = ds.inputs().row(c * 6).to_vec();
            for i in 0..6 {
                assert_eq!(ds.inputs().row(c * 6 + i), first.as_slice());
            }
            assert!(first.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_ne!(ds.inputs().row(0), ds.inputs().row(6));
    }

    #[test]
    fn deterministic_and_in_unit_cube() {
        let a = gen_blobs(4, 8, 20, 0.5, 99).unwrap();
        let b = gen_blobs(4, 8, 20, 0.5, 99).unwrap();
        assert!(a
            .inputs()
            .as_slice()
            .iter()
            .zip(b.inputs().as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a
            .inputs()
            .as_slice()
            .iter()
            .all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a, gen_blobs(4, 8, 20, 0.5, 100).unwrap());
    }

    #[test]
    fn test_split_shares_centres() {
        let spec = BlobSpec {
            classes: 3,
            dim: 4,
            per_class: 5,
            spread: 1e-300,
            seed: 1,
        };
        let (train, test) = spec.generate_with_test(2).unwrap();
        assert_eq!(train, spec.generate().unwrap());
        assert_eq!(test.len(), 6);
        assert_eq!(test.inputs().row(0), train.inputs().row(0));
    }

    #[test]
    fn preconditions() {
        assert!(gen_blobs(1, 3, 5, 0.1, 0).is_err());
        assert!(gen_blobs(2, 1, 5, 0.1, 0).is_err());
        assert!(gen_blobs(2, 3, 0, 0.1, 0).is_err());
        assert!(gen_blobs(2, 3, 5, 0.0, 0).is_err());
    }
}
