//! Summaries of Monte Carlo distance samples.

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Location and spread of a sample. Quantiles use the nearest-rank rule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// `(E[d²])^{1/2}`.
    pub root_mean_square: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Result<Self, HarnessError> {
        if samples.is_empty() {
            return Err(HarnessError::EmptySamples);
        }
        let n = samples.len() as f64;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |q: f64| sorted[((q * n).ceil() as usize).clamp(1, sorted.len()) - 1];
        Ok(Self {
            mean: samples.iter().sum::<f64>() / n,
            root_mean_square: (samples.iter().map(|x| x * x).sum::<f64>() / n).sqrt(),
            q10: rank(0.1),
            median: rank(0.5),
            q90: rank(0.9),
            max: *sorted.last().unwrap(),
        })
    }
}

/// Exceedance fractions `P(d > ε)` per level with the `L¹` and `L²` means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceCurve {
    pub epsilon: f64,
    pub fractions: Vec<f64>,
    /// `E[d]` per level.
    pub l1: Vec<f64>,
    /// `(E[d²])^{1/2}` per level.
    pub l2: Vec<f64>,
}

impl ExceedanceCurve {
    /// Whether the curve is zero from some level on.
    pub fn eventually_zero(&self) -> bool {
        self.fractions.last().is_some_and(|f| *f == 0.0)
    }
}

/// Fraction of replications whose distance exceeds `epsilon`, level by level.
pub fn estimate_in_probability_convergence(
    samples: &[Vec<f64>],
    epsilon: f64,
) -> Result<ExceedanceCurve, HarnessError> {
    if samples.is_empty() || samples.iter().any(Vec::is_empty) {
        return Err(HarnessError::EmptySamples);
    }
    let mut curve = ExceedanceCurve { epsilon, fractions: vec![], l1: vec![], l2: vec![] };
    for level in samples {
        let n = level.len() as f64;
        curve.fractions.push(level.iter().filter(|&&d| d > epsilon).count() as f64 / n);
        curve.l1.push(level.iter().sum::<f64>() / n);
        curve.l2.push((level.iter().map(|d| d * d).sum::<f64>() / n).sqrt());
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distances() {
        let c = estimate_in_probability_convergence(&[vec![0.0; 5], vec![0.0; 5]], 0.1).unwrap();
        assert_eq!(c.fractions, vec![0.0, 0.0]);
        assert_eq!(c.l2, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_two() {
        let c = estimate_in_probability_convergence(&[vec![2.0; 3], vec![2.0; 4]], 1.0).unwrap();
        assert_eq!(c.fractions, vec![1.0, 1.0]);
        assert_eq!(c.l1, vec![2.0, 2.0]);
    }

    #[test]
    fn halving_crosses_threshold() {
        let levels: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0 / f64::from(1 << i); 10]).collect();
        let c = estimate_in_probability_convergence(&levels, 0.05).unwrap();
        assert!(c.eventually_zero());
        assert_eq!(c.fractions[0], 1.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(estimate_in_probability_convergence(&[], 0.1), Err(HarnessError::EmptySamples)));
        assert!(matches!(estimate_in_probability_convergence(&[vec![]], 0.1), Err(HarnessError::EmptySamples)));
    }

    #[test]
    fn nearest_rank_quantiles() {
        let s = Summary::of(&(1..=10).map(f64::from).collect::<Vec<_>>()).unwrap();
        assert_eq!((s.q10, s.median, s.q90, s.max), (1.0, 5.0, 9.0, 10.0));
        assert_eq!(s.mean, 5.5);
    }
}
