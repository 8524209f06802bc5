//! Monte Carlo paths through a lattice, embedded as càdlàg step paths.

use rand::Rng;

use super::{LatticeBasis, LatticePath};
use crate::cadlag::{CadlagPath, PathError};
use crate::rng::stream_rng;
use crate::scalar::Scalar;

/// A sampled lattice path with `X`, `X∘` and the compensated `X♮` as step
/// paths jumping at the grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSample {
    pub path: LatticePath,
    pub x: CadlagPath<f64>,
    pub circ: CadlagPath<f64>,
    pub nat: CadlagPath<f64>,
}

impl<S: Scalar> LatticeBasis<S> {
    /// Draw a path using one uniform per step.
    pub fn sample_moves(&self, rng: &mut impl Rng) -> LatticePath {
        let mut states = vec![0];
        let mut moves = Vec::with_capacity(self.steps());
        for j in 0..self.steps() {
            let node = self.node(j, *states.last().unwrap());
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = node.transitions.len() - 1;
            for (m, tr) in node.transitions.iter().enumerate() {
                acc += tr.prob.to_f64_lossy();
                if u < acc {
                    pick = m;
                    break;
                }
            }
            moves.push(pick);
            states.push(node.transitions[pick].target);
        }
        LatticePath { states, moves }
    }

    /// Deterministic sample for a seed.
    pub fn sample_path(&self, seed: u64) -> Result<LatticeSample, PathError> {
        let path = self.sample_moves(&mut stream_rng(seed, &[]));
        self.embed(path)
    }

    /// Embed a lattice path.
    pub fn embed(&self, path: LatticePath) -> Result<LatticeSample, PathError> {
        let dim = self.dim();
        let times: Vec<f64> = self.times().iter().map(Scalar::to_f64_lossy).collect();
        let horizon = if times.len() > 1 { *times.last().unwrap() } else { 1.0 };
        let mut circ = vec![vec![0.0; dim]];
        let mut nat = vec![vec![0.0; dim]];
        for (j, (&s, &m)) in path.states.iter().zip(&path.moves).enumerate() {
            let node = self.node(j, s);
            let tr = &node.transitions[m];
            let mut c = circ[j].clone();
            let mut n = nat[j].clone();
            for i in 0..dim {
                let mean: f64 = node.transitions.iter().map(|t| t.prob.to_f64_lossy() * t.mark[i].to_f64_lossy()).sum();
                c[i] += tr.circ[i].to_f64_lossy();
                n[i] += tr.mark[i].to_f64_lossy() - mean;
            }
            circ.push(c);
            nat.push(n);
        }
        let x: Vec<Vec<f64>> =
            circ.iter().zip(&nat).map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect()).collect();
        let grid = times[1..].to_vec();
        let make = |v: Vec<Vec<f64>>| {
            let mut it = v.into_iter();
            let first = it.next().unwrap();
            CadlagPath::from_breakpoints(horizon, dim, first, grid.clone(), it.collect())
        };
        Ok(LatticeSample { x: make(x)?, circ: make(circ)?, nat: make(nat)?, path })
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::{LatticeBasis, Node, Transition};

    #[test]
    fn deterministic_single_state() {
        let node = |last: bool| Node {
            circ: vec![0.0],
            marks: vec![0.0],
            transitions: if last {
                vec![]
            } else {
                vec![Transition { target: 0, prob: 1.0, circ: vec![0.0], mark: vec![0.0] }]
            },
        };
        let b = LatticeBasis::new(vec![0.0, 0.5, 1.0], 1, vec![vec![node(false)], vec![node(false)], vec![node(true)]])
            .unwrap();
        let s = b.sample_path(3).unwrap();
        assert!(s.x.jumps().is_empty());
        assert_eq!(s.x.terminal(), vec![0.0]);
    }

    #[test]
    fn same_seed_same_path() {
        let b = trinomial(50);
        assert_eq!(b.sample_path(11).unwrap(), b.sample_path(11).unwrap());
        assert_ne!(b.sample_path(11).unwrap().path, b.sample_path(12).unwrap().path);
    }

    #[test]
    fn up_up_binomial() {
        let h = 0.3;
        let b = binomial(2, h);
        let s = b.embed(b.path_from_moves(&[0, 0]).unwrap()).unwrap();
        let j = s.x.jumps();
        assert_eq!((j[0].time, j[0].delta[0]), (1.0, h));
        assert_eq!((j[1].time, j[1].delta[0]), (2.0, h));
        assert_eq!(s.circ, s.x);
        assert!(s.nat.jumps().is_empty());
    }
}
