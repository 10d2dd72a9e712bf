use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Relative sizes of the train, test and cross-validation parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_weight: f64,
    pub test_weight: f64,
    pub cv_weight: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_weight: 7.5,
            test_weight: 1.0,
            cv_weight: 1.5,
        }
    }
}

impl SplitSpec {
    pub fn new(train_weight: f64, test_weight: f64, cv_weight: f64) -> Result<Self, CorpusError> {
        let spec = Self {
            train_weight,
            test_weight,
            cv_weight,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let w = [self.train_weight, self.test_weight, self.cv_weight];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(CorpusError::InvalidSplit(w));
        }
        Ok(())
    }

    /// `(train, test, cv)` sizes for `n` items: train and test are floored,
    /// cv takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let total = self.train_weight + self.test_weight + self.cv_weight;
        // The epsilon absorbs representation error in ratios such as 7.5/10.
        let part = |w: f64| ((n as f64) * w / total + 1e-9).floor() as usize;
        let train = part(self.train_weight).min(n);
        let test = part(self.test_weight).min(n - train);
        (train, test, n - train - test)
    }
}

/// Seeded shuffle followed by contiguous slicing into `(train, test, cv)`.
pub fn split<T: Clone>(
    items: &[T],
    spec: &SplitSpec,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>), CorpusError> {
    spec.validate()?;
    if items.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test, _) = spec.sizes(items.len());
    let pick = |range: &[usize]| range.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..train]),
        pick(&order[train..train + test]),
        pick(&order[train + test..]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes() {
        let spec = SplitSpec::default();
        assert_eq!(spec.sizes(200), (150, 20, 30));
        assert_eq!(spec.sizes(1), (0, 0, 1));
        assert_eq!(spec.sizes(15_236), (11_427, 1_523, 2_286));
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(SplitSpec::new(0.0, 0.0, 0.0).is_err());
        assert!(SplitSpec::new(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn rejects_empty_input() {
        let empty: [u32; 0] = [];
        assert!(split(&empty, &SplitSpec::default(), 1).is_err());
    }

    #[test]
    fn partition_and_reproducible() {
        let items: Vec<u32> = (0..97).collect();
        let a = split(&items, &SplitSpec::default(), 42).unwrap();
        let b = split(&items, &SplitSpec::default(), 42).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<u32> = a.0.iter().chain(&a.1).chain(&a.2).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
    }
}
