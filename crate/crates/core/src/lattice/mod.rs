//! Finite filtered probability spaces.
//!
//! A [`LatticeBasis`] is a layered Markov chain on a time grid
//! `0 = t_0 < … < t_K`. Every transition carries a probability, an increment
//! `ΔX∘ ∈ R^ℓ` and a jump mark `ΔX♮ ∈ R^ℓ` (the zero mark means no jump).
//! Layer `j` lists the states reachable at `t_j`; conditional expectations
//! are exact backward inductions over the layers.
//!
//! Recombining lattices identify paths ending in the same state, which keeps
//! the size at `O(states × steps)`. [`LatticeBasis::unroll`] expands a
//! lattice into its full scenario tree for cross-checks on small instances.

mod build;
mod jumps;
mod process;
mod sample;

use thiserror::Error;

use crate::scalar::Scalar;

pub use self::build::{pii_lattice, Outcome, StepLaw};
pub use self::jumps::{JumpMeasureView, NodeMarks, SpecialCheck};
pub use self::process::{AdaptedProcess, LatticePath, TransitionProcess};
pub use self::sample::LatticeSample;

/// Tolerance on probability sums and on the centring of `ΔX∘`.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("time grid must start at 0 and increase strictly")]
    BadTimeGrid,
    #[error("expected {expected} layers for {steps} steps, got {got}")]
    LayerCount { expected: usize, steps: usize, got: usize },
    #[error("the first layer must hold exactly one root state")]
    Root,
    #[error("state ({step}, {state}): {reason}")]
    BadState { step: usize, state: usize, reason: String },
    #[error("state ({step}, {state}) is unreachable")]
    Unreachable { step: usize, state: usize },
    #[error("value vector at step {step} has {got} entries for {expected} states")]
    ValueShape { step: usize, expected: usize, got: usize },
    #[error("conditional drift {drift:e} at state ({step}, {state}): input is not a martingale")]
    NotMartingale { step: usize, state: usize, drift: f64 },
    #[error("scenario tree would have {0} nodes")]
    TreeTooLarge(usize),
    #[error("objects live on different lattices")]
    Mismatch,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    /// Index of the successor state in the next layer.
    pub target: usize,
    pub prob: S,
    /// `ΔX∘`.
    pub circ: Vec<S>,
    /// Raw jump mark; all zeros when no jump happens.
    pub mark: Vec<S>,
}

impl<S: Scalar> Transition<S> {
    pub fn has_jump(&self) -> bool {
        self.mark.iter().any(|m| !m.is_zero())
    }
}

/// A state at some time step: cumulative `X∘`, cumulative raw marks and the
/// outgoing transitions (empty on the terminal layer).
#[derive(Debug, Clone, PartialEq)]
pub struct Node<S> {
    pub circ: Vec<S>,
    pub marks: Vec<S>,
    pub transitions: Vec<Transition<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeBasis<S> {
    times: Vec<S>,
    dim: usize,
    layers: Vec<Vec<Node<S>>>,
    tree: bool,
}

fn bad<S>(step: usize, state: usize, reason: impl Into<String>) -> Result<S, LatticeError> {
    Err(LatticeError::BadState { step, state, reason: reason.into() })
}

impl<S: Scalar> LatticeBasis<S> {
    /// Validate and assemble a lattice. `layers[j]` holds the states at
    /// `times[j]`; the single state of `layers[0]` is the root.
    pub fn new(times: Vec<S>, dim: usize, layers: Vec<Vec<Node<S>>>) -> Result<Self, LatticeError> {
        Self::with_kind(times, dim, layers, false)
    }

    fn with_kind(times: Vec<S>, dim: usize, layers: Vec<Vec<Node<S>>>, tree: bool) -> Result<Self, LatticeError> {
        if times.is_empty() || !times[0].is_zero() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LatticeError::BadTimeGrid);
        }
        let steps = times.len() - 1;
        if layers.len() != times.len() {
            return Err(LatticeError::LayerCount { expected: times.len(), steps, got: layers.len() });
        }
        if layers[0].len() != 1 {
            return Err(LatticeError::Root);
        }
        if dim == 0 {
            return Err(LatticeError::Invalid("dimension must be positive".into()));
        }
        let root = &layers[0][0];
        if root.circ.iter().chain(&root.marks).any(|x| !x.is_zero()) {
            return bad(0, 0, "root positions must be zero");
        }
        for (j, layer) in layers.iter().enumerate() {
            let mut reached = vec![j == 0; layer.len()];
            if j > 0 {
                for node in &layers[j - 1] {
                    for tr in &node.transitions {
                        if let Some(r) = reached.get_mut(tr.target) {
                            *r = true;
                        }
                    }
                }
            }
            if let Some(s) = reached.iter().position(|r| !r) {
                return Err(LatticeError::Unreachable { step: j, state: s });
            }
            for (s, node) in layer.iter().enumerate() {
                Self::check_node(&layers, j, s, node, dim, steps)?;
            }
        }
        Ok(Self { times, dim, layers, tree })
    }

    fn check_node(
        layers: &[Vec<Node<S>>],
        j: usize,
        s: usize,
        node: &Node<S>,
        dim: usize,
        steps: usize,
    ) -> Result<(), LatticeError> {
        if node.circ.len() != dim || node.marks.len() != dim {
            return bad(j, s, "position has wrong dimension");
        }
        if j == steps {
            if !node.transitions.is_empty() {
                return bad(j, s, "terminal state has transitions");
            }
            return Ok(());
        }
        if node.transitions.is_empty() {
            return bad(j, s, "no outgoing transitions");
        }
        let mut total = S::zero();
        let mut mean = vec![S::zero(); dim];
        for tr in &node.transitions {
            if tr.circ.len() != dim || tr.mark.len() != dim {
                return bad(j, s, "increment has wrong dimension");
            }
            if !(tr.prob > S::zero()) {
                return bad(j, s, "transition probabilities must be strictly positive");
            }
            let Some(next) = layers[j + 1].get(tr.target) else {
                return bad(j, s, format!("target {} out of range", tr.target));
            };
            for i in 0..dim {
                let dc = node.circ[i].clone() + tr.circ[i].clone() - next.circ[i].clone();
                let dm = node.marks[i].clone() + tr.mark[i].clone() - next.marks[i].clone();
                if !dc.within(1e-9) || !dm.within(1e-9) {
                    return bad(j, s, format!("increments inconsistent with position of target {}", tr.target));
                }
                mean[i] = mean[i].clone() + tr.prob.clone() * tr.circ[i].clone();
            }
            total = total + tr.prob.clone();
        }
        if !(total - S::one()).within(PROBABILITY_TOLERANCE) {
            return bad(j, s, "transition probabilities do not sum to 1");
        }
        if mean.iter().any(|m| !m.within(PROBABILITY_TOLERANCE)) {
            return bad(j, s, "E[ΔX∘ | state] is not zero");
        }
        Ok(())
    }

    /// Number of time steps `K`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[S] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[Vec<Node<S>>] {
        &self.layers
    }

    pub fn layer(&self, j: usize) -> &[Node<S>] {
        &self.layers[j]
    }

    pub fn node(&self, j: usize, s: usize) -> &Node<S> {
        &self.layers[j][s]
    }

    pub fn state_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn transition_count(&self) -> usize {
        self.layers.iter().flatten().map(|n| n.transitions.len()).sum()
    }

    /// Whether the lattice is a scenario tree (every state has one parent).
    pub fn is_tree(&self) -> bool {
        self.tree
    }

    /// `P(state_j = s)` for every layer.
    pub fn distribution(&self) -> Vec<Vec<S>> {
        let mut out = Vec::with_capacity(self.layers.len());
        out.push(vec![S::one()]);
        for j in 0..self.steps() {
            let mut next = vec![S::zero(); self.layers[j + 1].len()];
            for (s, node) in self.layers[j].iter().enumerate() {
                let w = out[j][s].clone();
                for tr in &node.transitions {
                    next[tr.target] = next[tr.target].clone() + w.clone() * tr.prob.clone();
                }
            }
            out.push(next);
        }
        out
    }

    /// `E[v(next state) | state]` for every state of layer `j`.
    pub fn step_expectation(&self, j: usize, next: &[S]) -> Vec<S> {
        self.layers[j]
            .iter()
            .map(|node| {
                node.transitions.iter().fold(S::zero(), |acc, tr| acc + tr.prob.clone() * next[tr.target].clone())
            })
            .collect()
    }

    fn check_layer(&self, j: usize, values: &[S]) -> Result<(), LatticeError> {
        let expected = self.layers[j].len();
        if values.len() != expected {
            return Err(LatticeError::ValueShape { step: j, expected, got: values.len() });
        }
        Ok(())
    }

    /// `E[ξ | G_{t_j}]` for a random variable given on the terminal states.
    pub fn conditional_expectation(&self, terminal: &[S], j: usize) -> Result<Vec<S>, LatticeError> {
        self.check_layer(self.steps(), terminal)?;
        if j > self.steps() {
            return Err(LatticeError::Invalid(format!("step {j} beyond the horizon")));
        }
        let mut v = terminal.to_vec();
        for m in (j..self.steps()).rev() {
            v = self.step_expectation(m, &v);
        }
        Ok(v)
    }

    /// `Y_{t_j} = E[ξ | G_{t_j}]` at every step.
    pub fn martingale_from_terminal(&self, terminal: Vec<S>) -> Result<AdaptedProcess<S>, LatticeError> {
        self.check_layer(self.steps(), &terminal)?;
        let mut values = vec![terminal];
        for m in (0..self.steps()).rev() {
            let prev = self.step_expectation(m, values.last().unwrap());
            values.push(prev);
        }
        values.reverse();
        Ok(AdaptedProcess { values })
    }

    /// Martingale generated by a function of the terminal state.
    pub fn martingale_from_fn(&self, f: impl Fn(&Node<S>) -> S) -> AdaptedProcess<S> {
        let terminal = self.layers[self.steps()].iter().map(f).collect();
        self.martingale_from_terminal(terminal).expect("shape matches by construction")
    }

    /// Adapted process from a function of the state.
    pub fn adapted_from_fn(&self, f: impl Fn(usize, &Node<S>) -> S) -> AdaptedProcess<S> {
        AdaptedProcess {
            values: self.layers.iter().enumerate().map(|(j, l)| l.iter().map(|n| f(j, n)).collect()).collect(),
        }
    }

    /// Increments `ΔX∘_i` of coordinate `i`, as a process on transitions.
    pub fn circ_process(&self, i: usize) -> TransitionProcess<S> {
        TransitionProcess::from_fn(self, S::zero(), |_, _, tr| tr.circ[i].clone())
    }

    /// Raw mark sum of coordinate `i`.
    pub fn raw_mark_process(&self, i: usize) -> TransitionProcess<S> {
        TransitionProcess::from_fn(self, S::zero(), |_, _, tr| tr.mark[i].clone())
    }

    /// Compensated mark sum `X♮_i`: raw marks minus their conditional mean.
    pub fn nat_process(&self, i: usize) -> TransitionProcess<S> {
        let means: Vec<Vec<S>> = self
            .layers
            .iter()
            .map(|l| {
                l.iter()
                    .map(|n| n.transitions.iter().fold(S::zero(), |acc, tr| acc + tr.prob.clone() * tr.mark[i].clone()))
                    .collect()
            })
            .collect();
        TransitionProcess::from_fn(self, S::zero(), |j, s, tr| tr.mark[i].clone() - means[j][s].clone())
    }

    /// `X_i = X∘_i + X♮_i`.
    pub fn x_process(&self, i: usize) -> TransitionProcess<S> {
        self.circ_process(i).add(&self.nat_process(i)).expect("same lattice")
    }

    /// The lattice path that takes transition `moves[j]` out of each state.
    pub fn path_from_moves(&self, moves: &[usize]) -> Result<LatticePath, LatticeError> {
        if moves.len() != self.steps() {
            return Err(LatticeError::Invalid(format!("expected {} moves, got {}", self.steps(), moves.len())));
        }
        let mut states = vec![0];
        for (j, &m) in moves.iter().enumerate() {
            let node = &self.layers[j][*states.last().unwrap()];
            let tr = node
                .transitions
                .get(m)
                .ok_or_else(|| LatticeError::Invalid(format!("move {m} out of range at step {j}")))?;
            states.push(tr.target);
        }
        Ok(LatticePath { states, moves: moves.to_vec() })
    }

    /// Expand into the full scenario tree. Refused above `max_nodes` nodes.
    pub fn unroll(&self, max_nodes: usize) -> Result<LatticeBasis<S>, LatticeError> {
        let mut counts = vec![1usize; 1];
        for j in 0..self.steps() {
            let mut next = vec![0usize; self.layers[j + 1].len()];
            for (s, node) in self.layers[j].iter().enumerate() {
                for tr in &node.transitions {
                    next[tr.target] = next[tr.target].saturating_add(counts[s]);
                }
            }
            let total: usize = counts.iter().sum::<usize>().saturating_add(next.iter().sum());
            if total > max_nodes {
                return Err(LatticeError::TreeTooLarge(total));
            }
            counts = next;
        }
        let mut origin = vec![vec![0usize]];
        let mut layers: Vec<Vec<Node<S>>> = Vec::with_capacity(self.layers.len());
        for j in 0..=self.steps() {
            let mut next_origin = Vec::new();
            let mut layer = Vec::with_capacity(origin[j].len());
            for &s in &origin[j] {
                let node = &self.layers[j][s];
                let mut transitions = Vec::with_capacity(node.transitions.len());
                for tr in &node.transitions {
                    transitions.push(Transition { target: next_origin.len(), ..tr.clone() });
                    next_origin.push(tr.target);
                }
                layer.push(Node { circ: node.circ.clone(), marks: node.marks.clone(), transitions });
            }
            layers.push(layer);
            origin.push(next_origin);
        }
        LatticeBasis::with_kind(self.times.clone(), self.dim, layers, true)
    }

    /// For a tree produced by [`unroll`](Self::unroll), the lattice state
    /// each tree node corresponds to.
    pub fn project_states(&self, tree: &LatticeBasis<S>) -> Result<Vec<Vec<usize>>, LatticeError> {
        if tree.steps() != self.steps() || !tree.is_tree() {
            return Err(LatticeError::Mismatch);
        }
        let mut out = vec![vec![0usize]];
        for j in 0..self.steps() {
            let mut next = vec![0usize; tree.layers[j + 1].len()];
            for (ts, tnode) in tree.layers[j].iter().enumerate() {
                let node = &self.layers[j][out[j][ts]];
                if node.transitions.len() != tnode.transitions.len() {
                    return Err(LatticeError::Mismatch);
                }
                for (ttr, tr) in tnode.transitions.iter().zip(&node.transitions) {
                    next[ttr.target] = tr.target;
                }
            }
            out.push(next);
        }
        Ok(out)
    }

    /// Lossy conversion to another scalar type, e.g. exact to `f64`.
    pub fn convert<T: Scalar>(&self) -> LatticeBasis<T> {
        let c = |v: &[S]| v.iter().map(|x| T::from_f64_lossy(x.to_f64_lossy())).collect::<Vec<T>>();
        LatticeBasis {
            times: c(&self.times),
            dim: self.dim,
            tree: self.tree,
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.iter()
                        .map(|n| Node {
                            circ: c(&n.circ),
                            marks: c(&n.marks),
                            transitions: n
                                .transitions
                                .iter()
                                .map(|tr| Transition {
                                    target: tr.target,
                                    prob: T::from_f64_lossy(tr.prob.to_f64_lossy()),
                                    circ: c(&tr.circ),
                                    mark: c(&tr.mark),
                                })
                                .collect(),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Symmetric ±h walk with `k` unit steps.
    pub fn binomial(k: usize, h: f64) -> LatticeBasis<f64> {
        let up = Outcome::new(0.5, vec![1], vec![h], vec![0.0]);
        let down = Outcome::new(0.5, vec![-1], vec![-h], vec![0.0]);
        pii_lattice((0..=k).map(|j| j as f64).collect(), 1, &vec![StepLaw::new(vec![up, down]); k]).unwrap()
    }

    /// `{−1, 0, 1}` walk with probabilities ¼, ½, ¼.
    pub fn trinomial(k: usize) -> LatticeBasis<f64> {
        let law = StepLaw::new(vec![
            Outcome::new(0.25, vec![-1], vec![-1.0], vec![0.0]),
            Outcome::new(0.5, vec![0], vec![0.0], vec![0.0]),
            Outcome::new(0.25, vec![1], vec![1.0], vec![0.0]),
        ]);
        pii_lattice((0..=k).map(|j| j as f64).collect(), 1, &vec![law; k]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn binomial_conditional_expectations() {
        let b = binomial(2, 1.0);
        let x2: Vec<f64> = b.layer(2).iter().map(|n| n.circ[0]).collect();
        let e1 = b.conditional_expectation(&x2, 1).unwrap();
        let x1: Vec<f64> = b.layer(1).iter().map(|n| n.circ[0]).collect();
        assert_eq!(e1, x1);
        assert_eq!(b.conditional_expectation(&x2, 0).unwrap(), vec![0.0]);
        assert_eq!(b.conditional_expectation(&x2, 2).unwrap(), x2);
    }

    #[test]
    fn squared_walk() {
        let h = 0.5;
        let b = binomial(2, h);
        let sq: Vec<f64> = b.layer(2).iter().map(|n| n.circ[0] * n.circ[0]).collect();
        let e1 = b.conditional_expectation(&sq, 1).unwrap();
        for (v, n) in e1.iter().zip(b.layer(1)) {
            assert_eq!(*v, n.circ[0] * n.circ[0] + h * h);
        }
    }

    #[test]
    fn martingale_process_matches_conditional_expectations() {
        let b = trinomial(4);
        let y = b.martingale_from_fn(|n| n.circ[0].powi(3) + 1.0);
        let terminal = y.values[4].clone();
        for j in 0..=4 {
            assert_eq!(y.values[j], b.conditional_expectation(&terminal, j).unwrap());
        }
    }

    #[test]
    fn distribution_sums_to_one() {
        let b = trinomial(6);
        for layer in b.distribution() {
            assert!((layer.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn validation_rejects_bad_lattices() {
        let node = |tr: Vec<Transition<f64>>| Node { circ: vec![0.0], marks: vec![0.0], transitions: tr };
        let leaf = |c: f64| Node { circ: vec![c], marks: vec![0.0], transitions: vec![] };
        let tr = |p: f64, c: f64, target: usize| Transition { target, prob: p, circ: vec![c], mark: vec![0.0] };
        let times = vec![0.0, 1.0];
        let ok = LatticeBasis::new(
            times.clone(),
            1,
            vec![vec![node(vec![tr(0.5, 1.0, 0), tr(0.5, -1.0, 1)])], vec![leaf(1.0), leaf(-1.0)]],
        );
        assert!(ok.is_ok());
        let zero_prob = LatticeBasis::new(
            times.clone(),
            1,
            vec![vec![node(vec![tr(1.0, 0.0, 0), tr(0.0, 1.0, 1)])], vec![leaf(0.0), leaf(1.0)]],
        );
        assert!(matches!(zero_prob, Err(LatticeError::BadState { .. })));
        let drift = LatticeBasis::new(times.clone(), 1, vec![vec![node(vec![tr(1.0, 1.0, 0)])], vec![leaf(1.0)]]);
        assert!(matches!(drift, Err(LatticeError::BadState { .. })));
        let orphan =
            LatticeBasis::new(times.clone(), 1, vec![vec![node(vec![tr(1.0, 0.0, 0)])], vec![leaf(0.0), leaf(2.0)]]);
        assert_eq!(orphan.unwrap_err(), LatticeError::Unreachable { step: 1, state: 1 });
        let sum = LatticeBasis::new(
            times,
            1,
            vec![vec![node(vec![tr(0.5, 1.0, 0), tr(0.4, -1.0, 1)])], vec![leaf(1.0), leaf(-1.0)]],
        );
        assert!(matches!(sum, Err(LatticeError::BadState { .. })));
    }

    #[test]
    fn tree_agrees_with_lattice() {
        let b = trinomial(5);
        let tree = b.unroll(1 << 20).unwrap();
        assert!(tree.is_tree());
        assert_eq!(tree.layer(5).len(), 243);
        let map = b.project_states(&tree).unwrap();
        let f = |n: &Node<f64>| (n.circ[0] - 0.5).max(0.0);
        let y = b.martingale_from_fn(f);
        let yt = tree.martingale_from_fn(f);
        for j in 0..=5 {
            for (ts, &s) in map[j].iter().enumerate() {
                assert!((yt.values[j][ts] - y.values[j][s]).abs() < 1e-14);
            }
        }
        assert!(matches!(trinomial(12).unroll(1000), Err(LatticeError::TreeTooLarge(_))));
    }

    #[test]
    fn path_from_moves_follows_targets() {
        let b = binomial(2, 0.5);
        let p = b.path_from_moves(&[0, 0]).unwrap();
        assert_eq!(b.node(2, p.states[2]).circ, vec![1.0]);
        assert!(b.path_from_moves(&[0]).is_err());
        assert!(b.path_from_moves(&[0, 7]).is_err());
    }
}
