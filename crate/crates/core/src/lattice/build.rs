//! Recombining lattices for processes with independent increments.

use std::collections::BTreeMap;

use super::{LatticeBasis, LatticeError, Node, Transition};
use crate::scalar::Scalar;

/// One possible step: probability, integer recombination key and the
/// increments it produces. Steps whose keys sum to the same vector must
/// lead to the same position.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<S> {
    pub prob: S,
    pub key: Vec<i64>,
    pub circ: Vec<S>,
    pub mark: Vec<S>,
}

impl<S> Outcome<S> {
    pub fn new(prob: S, key: Vec<i64>, circ: Vec<S>, mark: Vec<S>) -> Self {
        Self { prob, key, circ, mark }
    }
}

/// Distribution of a single step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLaw<S> {
    pub outcomes: Vec<Outcome<S>>,
}

impl<S: Scalar> StepLaw<S> {
    pub fn new(outcomes: Vec<Outcome<S>>) -> Self {
        Self { outcomes }
    }

    /// Independent product of two laws: probabilities multiply, keys are
    /// concatenated and increments add.
    pub fn product(&self, other: &StepLaw<S>) -> StepLaw<S> {
        let mut outcomes = Vec::with_capacity(self.outcomes.len() * other.outcomes.len());
        for a in &self.outcomes {
            for b in &other.outcomes {
                outcomes.push(Outcome {
                    prob: a.prob.clone() * b.prob.clone(),
                    key: a.key.iter().chain(&b.key).copied().collect(),
                    circ: a.circ.iter().zip(&b.circ).map(|(x, y)| x.clone() + y.clone()).collect(),
                    mark: a.mark.iter().zip(&b.mark).map(|(x, y)| x.clone() + y.clone()).collect(),
                });
            }
        }
        StepLaw { outcomes }
    }
}

/// Lattice whose step `j` is drawn from `laws[j]` independently of the
/// past. States are cumulative keys, sorted lexicographically in each layer.
pub fn pii_lattice<S: Scalar>(times: Vec<S>, dim: usize, laws: &[StepLaw<S>]) -> Result<LatticeBasis<S>, LatticeError> {
    if laws.len() + 1 != times.len() {
        return Err(LatticeError::LayerCount { expected: laws.len() + 1, steps: laws.len(), got: times.len() });
    }
    let key_len = laws.first().and_then(|l| l.outcomes.first()).map_or(0, |o| o.key.len());
    if laws.iter().flat_map(|l| &l.outcomes).any(|o| o.key.len() != key_len) {
        return Err(LatticeError::Invalid("recombination keys differ in length".into()));
    }
    let root = Node { circ: vec![S::zero(); dim], marks: vec![S::zero(); dim], transitions: Vec::new() };
    let mut layers = vec![vec![root]];
    let mut keys = vec![vec![0i64; key_len]];
    for law in laws {
        let mut next: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        for k in &keys {
            for o in &law.outcomes {
                next.insert(k.iter().zip(&o.key).map(|(a, b)| a + b).collect(), 0);
            }
        }
        for (i, v) in next.values_mut().enumerate() {
            *v = i;
        }
        let mut new_layer: Vec<Option<Node<S>>> = vec![None; next.len()];
        let layer = layers.last_mut().unwrap();
        for (node, k) in layer.iter_mut().zip(&keys) {
            for o in &law.outcomes {
                let nk: Vec<i64> = k.iter().zip(&o.key).map(|(a, b)| a + b).collect();
                let target = next[&nk];
                if o.circ.len() != dim || o.mark.len() != dim {
                    return Err(LatticeError::Invalid("outcome increment has wrong dimension".into()));
                }
                new_layer[target].get_or_insert_with(|| Node {
                    circ: node.circ.iter().zip(&o.circ).map(|(a, b)| a.clone() + b.clone()).collect(),
                    marks: node.marks.iter().zip(&o.mark).map(|(a, b)| a.clone() + b.clone()).collect(),
                    transitions: Vec::new(),
                });
                node.transitions.push(Transition {
                    target,
                    prob: o.prob.clone(),
                    circ: o.circ.clone(),
                    mark: o.mark.clone(),
                });
            }
        }
        layers.push(new_layer.into_iter().map(|n| n.expect("every key is hit")).collect());
        keys = next.into_keys().collect();
    }
    LatticeBasis::new(times, dim, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational;
    use num_rational::BigRational;

    #[test]
    fn trinomial_recombines() {
        let law = StepLaw::new(vec![
            Outcome::new(0.25, vec![-1], vec![-1.0], vec![0.0]),
            Outcome::new(0.5, vec![0], vec![0.0], vec![0.0]),
            Outcome::new(0.25, vec![1], vec![1.0], vec![0.0]),
        ]);
        let b = pii_lattice((0..=10).map(f64::from).collect(), 1, &vec![law; 10]).unwrap();
        assert_eq!(b.layer(10).len(), 21);
        assert_eq!(b.layer(10)[0].circ, vec![-10.0]);
    }

    #[test]
    fn exact_product_law() {
        let walk = StepLaw::new(vec![
            Outcome::new(rational(1, 2), vec![1, 0], vec![rational(1, 1)], vec![rational(0, 1)]),
            Outcome::new(rational(1, 2), vec![-1, 0], vec![rational(-1, 1)], vec![rational(0, 1)]),
        ]);
        let jump = StepLaw::new(vec![
            Outcome::new(rational(3, 4), vec![0], vec![rational(0, 1)], vec![rational(0, 1)]),
            Outcome::new(rational(1, 4), vec![1], vec![rational(0, 1)], vec![rational(2, 1)]),
        ]);
        let law = walk.product(&jump);
        let total = law.outcomes.iter().fold(rational(0, 1), |a, o| a + o.prob.clone());
        assert_eq!(total, rational(1, 1));
        let b: LatticeBasis<BigRational> =
            pii_lattice(vec![rational(0, 1), rational(1, 2), rational(1, 1)], 1, &[law.clone(), law]).unwrap();
        assert_eq!(b.layer(2).len(), 9);
    }

    #[test]
    fn inconsistent_keys_are_caught() {
        let law = StepLaw::new(vec![
            Outcome::new(0.5, vec![0], vec![1.0], vec![0.0]),
            Outcome::new(0.5, vec![0], vec![-1.0], vec![0.0]),
        ]);
        assert!(pii_lattice(vec![0.0, 1.0], 1, &[law]).is_err());
    }
}
