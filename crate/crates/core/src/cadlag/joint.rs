//! Detecting joint versus merely componentwise J1 convergence.
//!
//! Componentwise J1 convergence of `(α^{n,1}, …, α^{n,q})` upgrades to J1
//! convergence in the product space exactly when, in addition, every
//! partial sum `Σ_{i≤p} α^{n,i}` converges. The check below evaluates both
//! conditions at the last index of the supplied sequences and also computes
//! the product-space distance directly, so the two routes can be compared.

use super::{j1_distance, CadlagPath, PathError};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointVerdict {
    /// Components and all partial sums are within tolerance.
    Joint,
    /// Components converge but some partial sum does not.
    SeparateOnly,
    /// Some component itself is not within tolerance.
    Divergent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointReport<T> {
    pub verdict: JointVerdict,
    pub component_distances: Vec<T>,
    pub partial_sum_distances: Vec<T>,
    /// J1 distance of the stacked `q`-dimensional paths.
    pub product_distance: T,
}

pub fn joint_j1_check<T: Real>(
    sequences: &[Vec<CadlagPath<T>>],
    limits: &[CadlagPath<T>],
    eps: T,
) -> Result<JointReport<T>, PathError> {
    if sequences.is_empty() || sequences.iter().any(Vec::is_empty) {
        return Err(PathError::EmptyInput);
    }
    if sequences.len() != limits.len() {
        return Err(PathError::DimensionMismatch { left: sequences.len(), right: limits.len() });
    }
    let finals: Vec<&CadlagPath<T>> = sequences.iter().map(|s| s.last().unwrap()).collect();
    if let Some(p) = finals.iter().chain(limits.iter().collect::<Vec<_>>().iter()).find(|p| p.dim() != 1) {
        return Err(PathError::DimensionMismatch { left: 1, right: p.dim() });
    }

    let component_distances =
        finals.iter().zip(limits).map(|(a, b)| j1_distance(a, b)).collect::<Result<Vec<_>, _>>()?;

    let mut partial_sum_distances = Vec::with_capacity(finals.len());
    let mut sum = finals[0].clone();
    let mut limit_sum = limits[0].clone();
    partial_sum_distances.push(component_distances[0]);
    for (a, b) in finals.iter().zip(limits).skip(1) {
        sum = sum.add(a)?;
        limit_sum = limit_sum.add(b)?;
        partial_sum_distances.push(j1_distance(&sum, &limit_sum)?);
    }

    let product_distance =
        j1_distance(&CadlagPath::stack(&finals)?, &CadlagPath::stack(&limits.iter().collect::<Vec<_>>())?)?;

    let verdict = if component_distances.iter().any(|&d| d >= eps) {
        JointVerdict::Divergent
    } else if partial_sum_distances.iter().any(|&d| d >= eps) {
        JointVerdict::SeparateOnly
    } else {
        JointVerdict::Joint
    };
    Ok(JointReport { verdict, component_distances, partial_sum_distances, product_distance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(t: f64) -> CadlagPath<f64> {
        CadlagPath::scalar_step(1.0, 0.0, &[(t, 1.0)]).unwrap()
    }

    #[test]
    fn constant_sequences_are_joint() {
        let a = unit(0.3);
        let b = unit(0.7);
        let r = joint_j1_check(&[vec![a.clone(); 3], vec![b.clone(); 3]], &[a, b], 0.05).unwrap();
        assert_eq!(r.verdict, JointVerdict::Joint);
        assert_eq!(r.product_distance, 0.0);
    }

    #[test]
    fn opposite_side_jumps_are_separate_only() {
        let n = 10.0;
        let r = joint_j1_check(&[vec![unit(0.5 - 1.0 / n)], vec![unit(0.5 + 1.0 / n)]], &[unit(0.5), unit(0.5)], 0.5)
            .unwrap();
        assert_eq!(r.verdict, JointVerdict::SeparateOnly);
        assert!(r.component_distances.iter().all(|&d| (d - 0.1).abs() < 1e-12));
        assert_eq!(r.partial_sum_distances[1], 1.0);
        assert_eq!(r.product_distance, 1.0);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert_eq!(joint_j1_check::<f64>(&[], &[], 0.1).unwrap_err(), PathError::EmptyInput);
        assert_eq!(joint_j1_check(&[vec![]], &[unit(0.5)], 0.1).unwrap_err(), PathError::EmptyInput);
    }
}
