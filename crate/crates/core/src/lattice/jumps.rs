//! The jump measure of the marks and its compensator.
//!
//! On a lattice the compensator of `μ` is the conditional mark law:
//! `ν({t_{j+1}} × {x} | state) = P(mark = x | state)`. For any mark function
//! `u` with `u(0) = 0`, `u*μ − u*ν` is then a martingale.

use super::{LatticeBasis, LatticeError, TransitionProcess};
use crate::cadlag::JumpWindow;
use crate::scalar::Scalar;

/// Distinct nonzero marks reachable from one state, their conditional
/// probabilities, and the mark index of each outgoing transition.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMarks<S> {
    pub marks: Vec<Vec<S>>,
    pub probs: Vec<S>,
    pub of_transition: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpMeasureView<S> {
    /// `nodes[j][s]` describes the step out of state `s` at time `t_j`.
    pub nodes: Vec<Vec<NodeMarks<S>>>,
}

impl<S: Scalar> JumpMeasureView<S> {
    /// `ν({t_{j+1}} × {x})` given state `s` at `t_j`.
    pub fn nu(&self, j: usize, s: usize, mark: &[S]) -> S {
        let n = &self.nodes[j][s];
        n.marks.iter().position(|m| m.as_slice() == mark).map_or_else(S::zero, |i| n.probs[i].clone())
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.iter().flatten().all(|n| n.marks.is_empty())
    }

    /// Every mark that occurs somewhere, in order of first appearance.
    pub fn distinct_marks(&self) -> Vec<Vec<S>> {
        let mut out: Vec<Vec<S>> = Vec::new();
        for m in self.nodes.iter().flatten().flat_map(|n| &n.marks) {
            if !out.contains(m) {
                out.push(m.clone());
            }
        }
        out
    }
}

/// Outcome of the special-semimartingale check for `R_{2,I}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialCheck<S> {
    /// Largest `|E[Δ(R_{2,I}⋆μ̃) | state]|`.
    pub martingale_residual: f64,
    /// Largest pathwise mismatch in `R*μ = R⋆μ̃ + R*ν`.
    pub identity_residual: f64,
    pub integral: TransitionProcess<S>,
    pub compensated: TransitionProcess<S>,
    pub compensator: TransitionProcess<S>,
}

/// `Σ_i (|x_i| ∧ 1)²`.
pub(crate) fn r2<S: Scalar>(x: &[S]) -> S {
    x.iter().fold(S::zero(), |acc, xi| {
        let a = xi.abs_val();
        let m = if a > S::one() { S::one() } else { a };
        acc + m.clone() * m
    })
}

impl<S: Scalar> LatticeBasis<S> {
    pub fn compensator(&self) -> JumpMeasureView<S> {
        let nodes = self.layers()[..self.steps()]
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|node| {
                        let mut marks: Vec<Vec<S>> = Vec::new();
                        let mut probs: Vec<S> = Vec::new();
                        let mut of_transition = Vec::with_capacity(node.transitions.len());
                        for tr in &node.transitions {
                            if !tr.has_jump() {
                                of_transition.push(None);
                                continue;
                            }
                            let i = match marks.iter().position(|m| *m == tr.mark) {
                                Some(i) => i,
                                None => {
                                    marks.push(tr.mark.clone());
                                    probs.push(S::zero());
                                    marks.len() - 1
                                }
                            };
                            probs[i] = probs[i].clone() + tr.prob.clone();
                            of_transition.push(Some(i));
                        }
                        NodeMarks { marks, probs, of_transition }
                    })
                    .collect()
            })
            .collect();
        JumpMeasureView { nodes }
    }

    /// `(u*μ, u*ν, u⋆μ̃)` for a mark function `u(j, s, x)`, evaluated only
    /// on nonzero marks.
    pub fn compensated_integral(
        &self,
        view: &JumpMeasureView<S>,
        u: impl Fn(usize, usize, &[S]) -> S,
    ) -> (TransitionProcess<S>, TransitionProcess<S>, TransitionProcess<S>) {
        let table: Vec<Vec<Vec<S>>> = view
            .nodes
            .iter()
            .enumerate()
            .map(|(j, l)| l.iter().enumerate().map(|(s, n)| n.marks.iter().map(|m| u(j, s, m)).collect()).collect())
            .collect();
        let integral = TransitionProcess::from_fn(self, S::zero(), |j, s, tr| {
            if tr.has_jump() {
                let n = &view.nodes[j][s];
                let i = n.marks.iter().position(|m| *m == tr.mark).expect("mark listed");
                table[j][s][i].clone()
            } else {
                S::zero()
            }
        });
        let compensator = TransitionProcess::predictable_from_fn(self, S::zero(), |j, s| {
            view.nodes[j][s].probs.iter().zip(&table[j][s]).fold(S::zero(), |acc, (p, v)| acc + p.clone() * v.clone())
        });
        let compensated = integral.sub(&compensator).expect("same lattice");
        (integral, compensator, compensated)
    }

    /// Check that `R_{2,I}*μ` is special with compensator `R_{2,I}*ν` and
    /// martingale part `R_{2,I}⋆μ̃`.
    pub fn special_decomposition_check(&self, window: &JumpWindow<f64>) -> Result<SpecialCheck<S>, LatticeError> {
        if window.dim() != self.dim() {
            return Err(LatticeError::Invalid(format!(
                "window dimension {} differs from lattice dimension {}",
                window.dim(),
                self.dim()
            )));
        }
        let view = self.compensator();
        let (integral, compensator, compensated) = self.compensated_integral(&view, |_, _, x| {
            let xf: Vec<f64> = x.iter().map(Scalar::to_f64_lossy).collect();
            if window.contains(&xf) {
                r2(x)
            } else {
                S::zero()
            }
        });
        let rebuilt = compensated.add(&compensator).expect("same lattice");
        let identity_residual = rebuilt.sub(&integral).expect("same lattice").max_abs_increment();
        Ok(SpecialCheck {
            martingale_residual: compensated.max_drift(self).0,
            identity_residual,
            integral,
            compensated,
            compensator,
        })
    }
}
