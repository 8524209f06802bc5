//! Processes attached to a lattice.
//!
//! An [`AdaptedProcess`] is a function of the current state. Many processes
//! of interest (stochastic integrals, residual martingales, brackets) depend
//! on the whole path and are stored as a [`TransitionProcess`]: an initial
//! value plus one increment per transition. A predictable increment is one
//! that does not vary across the transitions out of a state.

use super::{LatticeBasis, LatticeError, Transition};
use crate::cadlag::{CadlagPath, PathError};
use crate::scalar::Scalar;

/// A path through the lattice: the state at each step and the transition
/// taken out of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticePath {
    pub states: Vec<usize>,
    pub moves: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess<S> {
    /// `values[j][s]` is the value in state `s` at step `j`.
    pub values: Vec<Vec<S>>,
}

impl<S: Scalar> AdaptedProcess<S> {
    pub fn initial(&self) -> &S {
        &self.values[0][0]
    }

    pub fn terminal(&self) -> &[S] {
        self.values.last().unwrap()
    }

    pub fn check(&self, basis: &LatticeBasis<S>) -> Result<(), LatticeError> {
        if self.values.len() != basis.layers().len() {
            return Err(LatticeError::Mismatch);
        }
        for (j, (v, l)) in self.values.iter().zip(basis.layers()).enumerate() {
            if v.len() != l.len() {
                return Err(LatticeError::ValueShape { step: j, expected: l.len(), got: v.len() });
            }
        }
        Ok(())
    }

    pub fn increments(&self, basis: &LatticeBasis<S>) -> Result<TransitionProcess<S>, LatticeError> {
        self.check(basis)?;
        Ok(TransitionProcess::from_fn(basis, self.initial().clone(), |j, s, tr| {
            self.values[j + 1][tr.target].clone() - self.values[j][s].clone()
        }))
    }

    pub fn along(&self, path: &LatticePath) -> Vec<S> {
        path.states.iter().enumerate().map(|(j, &s)| self.values[j][s].clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionProcess<S> {
    pub initial: S,
    /// `increments[j][s][τ]` is the change along transition `τ` out of
    /// state `s` at step `j`.
    pub increments: Vec<Vec<Vec<S>>>,
}

impl<S: Scalar> TransitionProcess<S> {
    pub fn from_fn(basis: &LatticeBasis<S>, initial: S, f: impl Fn(usize, usize, &Transition<S>) -> S) -> Self {
        let increments = basis.layers()[..basis.steps()]
            .iter()
            .enumerate()
            .map(|(j, layer)| {
                layer
                    .iter()
                    .enumerate()
                    .map(|(s, node)| node.transitions.iter().map(|tr| f(j, s, tr)).collect())
                    .collect()
            })
            .collect();
        Self { initial, increments }
    }

    /// Process whose increment out of each state is the given value,
    /// whatever transition is taken.
    pub fn predictable_from_fn(basis: &LatticeBasis<S>, initial: S, f: impl Fn(usize, usize) -> S) -> Self {
        let increments = basis.layers()[..basis.steps()]
            .iter()
            .enumerate()
            .map(|(j, layer)| {
                layer
                    .iter()
                    .enumerate()
                    .map(|(s, node)| {
                        let v = f(j, s);
                        vec![v; node.transitions.len()]
                    })
                    .collect()
            })
            .collect();
        Self { initial, increments }
    }

    pub fn zero(basis: &LatticeBasis<S>) -> Self {
        Self::from_fn(basis, S::zero(), |_, _, _| S::zero())
    }

    pub fn check(&self, basis: &LatticeBasis<S>) -> Result<(), LatticeError> {
        if self.increments.len() != basis.steps() {
            return Err(LatticeError::Mismatch);
        }
        for (inc, layer) in self.increments.iter().zip(basis.layers()) {
            if inc.len() != layer.len() || inc.iter().zip(layer).any(|(v, n)| v.len() != n.transitions.len()) {
                return Err(LatticeError::Mismatch);
            }
        }
        Ok(())
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.increments.len() == other.increments.len()
            && self
                .increments
                .iter()
                .zip(&other.increments)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len()))
    }

    /// Elementwise combination of increments and initial values.
    pub fn zip_with(&self, other: &Self, op: impl Fn(&S, &S) -> S) -> Result<Self, LatticeError> {
        if !self.same_shape(other) {
            return Err(LatticeError::Mismatch);
        }
        Ok(Self {
            initial: op(&self.initial, &other.initial),
            increments: self
                .increments
                .iter()
                .zip(&other.increments)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| op(u, v)).collect()).collect())
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, LatticeError> {
        self.zip_with(other, |a, b| a.clone() + b.clone())
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LatticeError> {
        self.zip_with(other, |a, b| a.clone() - b.clone())
    }

    pub fn scale(&self, c: &S) -> Self {
        self.map(|x| c.clone() * x.clone())
    }

    pub fn map(&self, f: impl Fn(&S) -> S) -> Self {
        Self {
            initial: f(&self.initial),
            increments: self
                .increments
                .iter()
                .map(|l| l.iter().map(|v| v.iter().map(&f).collect()).collect())
                .collect(),
        }
    }

    /// Same increments, started at zero.
    pub fn centred(&self) -> Self {
        Self { initial: S::zero(), increments: self.increments.clone() }
    }

    /// Whether every increment is known one step ahead.
    pub fn is_predictable(&self) -> bool {
        self.increments.iter().flatten().all(|v| v.windows(2).all(|w| w[0] == w[1]))
    }

    /// `E[increment | state]` at step `j`.
    pub fn step_mean(&self, basis: &LatticeBasis<S>, j: usize, s: usize) -> S {
        basis
            .node(j, s)
            .transitions
            .iter()
            .zip(&self.increments[j][s])
            .fold(S::zero(), |acc, (tr, x)| acc + tr.prob.clone() * x.clone())
    }

    /// Largest conditional drift `|E[increment | state]|` with its location.
    pub fn max_drift(&self, basis: &LatticeBasis<S>) -> (f64, usize, usize) {
        let mut worst = (0.0, 0, 0);
        for j in 0..self.increments.len() {
            for s in 0..self.increments[j].len() {
                let d = self.step_mean(basis, j, s).abs_val().to_f64_lossy();
                if d > worst.0 {
                    worst = (d, j, s);
                }
            }
        }
        worst
    }

    /// Error unless every conditional drift is below `tol`.
    pub fn require_martingale(&self, basis: &LatticeBasis<S>, tol: f64) -> Result<(), LatticeError> {
        self.check(basis)?;
        let (drift, step, state) = self.max_drift(basis);
        if drift > tol {
            return Err(LatticeError::NotMartingale { step, state, drift });
        }
        Ok(())
    }

    /// Values along a lattice path, one per time step.
    pub fn along(&self, path: &LatticePath) -> Vec<S> {
        let mut out = Vec::with_capacity(path.states.len());
        let mut acc = self.initial.clone();
        out.push(acc.clone());
        for (j, (&s, &m)) in path.states.iter().zip(&path.moves).enumerate() {
            acc = acc + self.increments[j][s][m].clone();
            out.push(acc.clone());
        }
        out
    }

    /// `E[V_{t_j}]` for every step.
    pub fn expected(&self, basis: &LatticeBasis<S>) -> Vec<S> {
        let dist = basis.distribution();
        let mut out = Vec::with_capacity(basis.steps() + 1);
        let mut acc = self.initial.clone();
        out.push(acc.clone());
        for j in 0..basis.steps() {
            for (s, w) in dist[j].iter().enumerate() {
                acc = acc + w.clone() * self.step_mean(basis, j, s);
            }
            out.push(acc.clone());
        }
        out
    }

    /// `E[(V_T − c)²]`, by propagating first and second moments forward.
    pub fn terminal_second_moment(&self, basis: &LatticeBasis<S>, c: &S) -> S {
        let start = self.initial.clone() - c.clone();
        let mut prob = vec![S::one()];
        let mut m1 = vec![start.clone()];
        let mut m2 = vec![start.clone() * start];
        for j in 0..basis.steps() {
            let n = basis.layer(j + 1).len();
            let (mut p, mut a, mut b) = (vec![S::zero(); n], vec![S::zero(); n], vec![S::zero(); n]);
            for (s, node) in basis.layer(j).iter().enumerate() {
                for (tr, d) in node.transitions.iter().zip(&self.increments[j][s]) {
                    let q = tr.prob.clone();
                    let t = tr.target;
                    let two_d = d.clone() + d.clone();
                    p[t] = p[t].clone() + q.clone() * prob[s].clone();
                    a[t] = a[t].clone() + q.clone() * (m1[s].clone() + prob[s].clone() * d.clone());
                    b[t] = b[t].clone()
                        + q * (m2[s].clone() + two_d * m1[s].clone() + d.clone() * d.clone() * prob[s].clone());
                }
            }
            prob = p;
            m1 = a;
            m2 = b;
        }
        m2.into_iter().fold(S::zero(), |acc, x| acc + x)
    }

    /// `E[V_{t_j} | state_j = s]` for every state.
    pub fn state_means(&self, basis: &LatticeBasis<S>) -> Vec<Vec<S>> {
        let dist = basis.distribution();
        let mut weighted = vec![vec![self.initial.clone()]];
        for j in 0..basis.steps() {
            let mut next = vec![S::zero(); basis.layer(j + 1).len()];
            for (s, node) in basis.layer(j).iter().enumerate() {
                for (tr, d) in node.transitions.iter().zip(&self.increments[j][s]) {
                    let t = tr.target;
                    next[t] =
                        next[t].clone() + tr.prob.clone() * (weighted[j][s].clone() + dist[j][s].clone() * d.clone());
                }
            }
            weighted.push(next);
        }
        weighted.into_iter().zip(dist).map(|(w, p)| w.into_iter().zip(p).map(|(a, b)| a / b).collect()).collect()
    }

    /// Largest absolute increment anywhere.
    pub fn max_abs_increment(&self) -> f64 {
        self.increments.iter().flatten().flatten().map(|x| x.abs_val().to_f64_lossy()).fold(0.0, f64::max)
    }

    /// Step path along a lattice path, with jumps at the grid times.
    pub fn to_path(&self, basis: &LatticeBasis<S>, path: &LatticePath) -> Result<CadlagPath<f64>, PathError> {
        let values = self.along(path);
        let times: Vec<f64> = basis.times().iter().map(|t| t.to_f64_lossy()).collect();
        let horizon = *times.last().unwrap();
        let horizon = if horizon > 0.0 { horizon } else { 1.0 };
        CadlagPath::from_breakpoints(
            horizon,
            1,
            vec![values[0].to_f64_lossy()],
            times[1..].to_vec(),
            values[1..].iter().map(|v| vec![v.to_f64_lossy()]).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::*;

    #[test]
    fn increments_reproduce_values_along_paths() {
        let b = trinomial(3);
        let y = b.martingale_from_fn(|n| n.circ[0] * n.circ[0]);
        let inc = y.increments(&b).unwrap();
        let p = b.path_from_moves(&[2, 0, 1]).unwrap();
        assert_eq!(inc.along(&p), y.along(&p));
        assert!(inc.max_drift(&b).0 < 1e-15);
    }

    #[test]
    fn second_moment_of_walk() {
        let b = trinomial(8);
        let x = b.circ_process(0);
        assert!((x.terminal_second_moment(&b, &0.0) - 4.0).abs() < 1e-12);
        assert_eq!(x.expected(&b), vec![0.0; 9]);
    }

    #[test]
    fn predictable_detection() {
        let b = binomial(3, 1.0);
        assert!(TransitionProcess::predictable_from_fn(&b, 0.0, |j, _| j as f64).is_predictable());
        assert!(!b.circ_process(0).is_predictable());
    }

    #[test]
    fn non_martingale_is_rejected() {
        let b = binomial(2, 1.0);
        let sq = b.circ_process(0).map(|x| x * x);
        assert!(matches!(sq.require_martingale(&b, 1e-10), Err(LatticeError::NotMartingale { .. })));
    }

    #[test]
    fn embedding_as_step_path() {
        let b = binomial(2, 0.5);
        let p = b.path_from_moves(&[0, 0]).unwrap();
        let path = b.circ_process(0).to_path(&b, &p).unwrap();
        assert_eq!(path.jumps().len(), 2);
        assert_eq!(path.jumps()[0].time, 1.0);
        assert_eq!(path.jumps()[1].delta, vec![0.5]);
    }
}
