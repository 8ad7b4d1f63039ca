use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NormalizerError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Per-component running mean and variance (Welford), mergeable across
/// workers with the parallel-variance formula.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the mean.
    pub m2: Vec<f64>,
    pub clip_bound: f64,
    pub epsilon: f64,
}

impl RunningNormalizer {
    pub const DEFAULT_CLIP: f64 = 10.0;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(dim: usize) -> Self {
        Self::with_bounds(dim, Self::DEFAULT_CLIP, Self::DEFAULT_EPSILON)
    }

    pub fn with_bounds(dim: usize, clip_bound: f64, epsilon: f64) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            clip_bound,
            epsilon,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// An empty accumulator with the same shape and bounds.
    pub fn empty_like(&self) -> Self {
        Self::with_bounds(self.dim(), self.clip_bound, self.epsilon)
    }

    fn check(&self, len: usize) -> Result<(), NormalizerError> {
        if len != self.dim() {
            return Err(NormalizerError::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn update(&mut self, x: &[f64]) -> Result<(), NormalizerError> {
        self.check(x.len())?;
        self.count += 1.0;
        let n = self.count;
        for ((m, s), &xi) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = xi - *m;
            *m += delta / n;
            *s += delta * (xi - *m);
        }
        Ok(())
    }

    /// Combines the statistics of two disjoint sample sets.
    pub fn merge(&mut self, other: &RunningNormalizer) -> Result<(), NormalizerError> {
        self.check(other.dim())?;
        if other.count == 0.0 {
            return Ok(());
        }
        if self.count == 0.0 {
            self.count = other.count;
            self.mean.clone_from(&other.mean);
            self.m2.clone_from(&other.m2);
            return Ok(());
        }
        let (na, nb) = (self.count, other.count);
        let n = na + nb;
        for i in 0..self.dim() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count = n;
        Ok(())
    }

    /// Population variance per component (zero before any sample).
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0.0 {
            return vec![0.0; self.dim()];
        }
        self.m2.iter().map(|s| (s / self.count).max(0.0)).collect()
    }

    /// `(x - mean) / sqrt(var + epsilon)`, clipped to `±clip_bound`.
    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>, NormalizerError> {
        self.check(x.len())?;
        let var = self.variance();
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&var)
            .map(|((&xi, &m), &v)| ((xi - m) / (v + self.epsilon).sqrt()).clamp(-self.clip_bound, self.clip_bound))
            .collect())
    }

    /// Normalizes `x`; when `frozen` is false the statistics are first
    /// updated with `x`.
    pub fn observe_and_normalize(&mut self, x: &[f64], frozen: bool) -> Result<Vec<f64>, NormalizerError> {
        if !frozen {
            self.update(x)?;
        }
        self.normalize(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn two_pass(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let n = samples.len() as f64;
        let dim = samples[0].len();
        let mean: Vec<f64> = (0..dim).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n).collect();
        let var = (0..dim)
            .map(|i| samples.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / n)
            .collect();
        (mean, var)
    }

    #[test]
    fn identical_samples_have_zero_variance() {
        let mut n = RunningNormalizer::new(3);
        for _ in 0..100 {
            n.update(&[1.5, -2.0, 0.25]).unwrap();
        }
        assert_eq!(n.variance(), vec![0.0; 3]);
    }

    #[test]
    fn first_update_sets_mean() {
        let mut n = RunningNormalizer::new(2);
        n.update(&[3.0, 4.0]).unwrap();
        assert_eq!(n.mean, vec![3.0, 4.0]);
        assert_eq!(n.m2, vec![0.0, 0.0]);
    }

    #[test]
    fn split_merge_matches_full_stream() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Vec<f64>> = (0..500)
            .map(|_| (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let mut full = RunningNormalizer::new(4);
        let mut a = RunningNormalizer::new(4);
        let mut b = RunningNormalizer::new(4);
        for (i, s) in samples.iter().enumerate() {
            full.update(s).unwrap();
            if i < 173 { a.update(s).unwrap() } else { b.update(s).unwrap() }
        }
        a.merge(&b).unwrap();
        let (mean, var) = two_pass(&samples);
        for i in 0..4 {
            assert!((a.mean[i] - full.mean[i]).abs() < 1e-9);
            assert!((a.variance()[i] - var[i]).abs() < 1e-9 * var[i]);
            assert!((full.mean[i] - mean[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_edge_cases() {
        let mut n = RunningNormalizer::new(2);
        n.update(&[1.0, 0.0]).unwrap();
        n.update(&[3.0, 0.0]).unwrap();
        // mean (2, 0), variance (1, 0)
        assert_eq!(n.normalize(&[2.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let out = n.normalize(&[2.0 + 100.0, 1e-7]).unwrap();
        assert_eq!(out[0], 10.0);
        assert!((out[1] - 1e-7 / 1e-8f64.sqrt()).abs() < 1e-12);
        assert_eq!(n.normalize(&[2.0, 1.0]).unwrap()[1], 10.0);
    }

    #[test]
    fn frozen_normalization_does_not_mutate() {
        let mut n = RunningNormalizer::new(2);
        n.update(&[1.0, 2.0]).unwrap();
        let before = n.clone();
        n.observe_and_normalize(&[5.0, 5.0], true).unwrap();
        assert_eq!(n, before);
        n.observe_and_normalize(&[5.0, 5.0], false).unwrap();
        assert_eq!(n.count, 2.0);
    }

    #[test]
    fn dimension_mismatch() {
        let mut n = RunningNormalizer::new(2);
        assert_eq!(
            n.update(&[1.0]),
            Err(NormalizerError::DimensionMismatch { expected: 2, got: 1 })
        );
    }
}
