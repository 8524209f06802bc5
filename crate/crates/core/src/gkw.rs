//! Orthogonal decomposition of a lattice martingale with respect to the
//! pair `(X∘, μ)`, where `μ` is the jump measure of the marks:
//!
//! `Y = Y_0 + Z·X∘ + U⋆μ̃ + N`, with `⟨N, X∘⟩ = 0` and
//! `E[ΔN 1_{mark = x} | state] = 0` for every mark `x`.
//!
//! Out of each state the increment `ΔY` is projected, in the
//! transition-conditional `L²` inner product, onto the span of the
//! coordinates of `ΔX∘` and of the compensated mark indicators
//! `1_{mark = x} − ν(x)`. `Z` and `U` are the coefficients; `ΔN` is the
//! residual. The projection is computed exactly for exact scalars.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::brackets::{predictable_covariation_unchecked, MARTINGALE_TOLERANCE};
use crate::lattice::{AdaptedProcess, JumpMeasureView, LatticeBasis, LatticeError, TransitionProcess};
use crate::scalar::Scalar;

/// Tolerance used to decide whether a float lattice satisfies (M2′).
pub const M2_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct M2Witness {
    pub step: usize,
    pub state: usize,
    pub coordinate: usize,
    pub mark: Vec<f64>,
    /// `E[ΔX∘_i 1_{mark = x} | state]`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum M2Verdict {
    Pass,
    Fail(M2Witness),
}

impl M2Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, M2Verdict::Pass)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GkwError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("condition (M2′) fails at step {}, state {}, mark {:?}", .0.step, .0.state, .0.mark)]
    M2Violation(M2Witness),
}

/// Check `E[ΔX∘_i · 1_{mark = x} | state] = 0` everywhere.
pub fn validate_m2prime<S: Scalar>(basis: &LatticeBasis<S>) -> M2Verdict {
    let view = basis.compensator();
    for j in 0..basis.steps() {
        for (s, node) in basis.layer(j).iter().enumerate() {
            let nm = &view.nodes[j][s];
            for (x, mark) in nm.marks.iter().enumerate() {
                for i in 0..basis.dim() {
                    let v = node
                        .transitions
                        .iter()
                        .zip(&nm.of_transition)
                        .filter(|(_, m)| **m == Some(x))
                        .fold(S::zero(), |acc, (tr, _)| acc + tr.prob.clone() * tr.circ[i].clone());
                    if !v.within(M2_TOLERANCE) {
                        return M2Verdict::Fail(M2Witness {
                            step: j,
                            state: s,
                            coordinate: i,
                            mark: mark.iter().map(Scalar::to_f64_lossy).collect(),
                            value: v.to_f64_lossy(),
                        });
                    }
                }
            }
        }
    }
    M2Verdict::Pass
}

/// `LDLᵀ` factorization with diagonal pivoting of a small positive
/// semidefinite matrix. Pivots that are negligible next to the largest
/// diagonal entry end the elimination; the matching coefficients are set
/// to zero, which picks one solution of a consistent singular system.
#[derive(Debug, Clone)]
struct SymSolver<S> {
    perm: Vec<usize>,
    rank: usize,
    l: Vec<Vec<S>>,
    d: Vec<S>,
}

impl<S: Scalar> SymSolver<S> {
    fn new(mut a: Vec<Vec<S>>) -> Self {
        let n = a.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = (0..n).fold(S::zero(), |m, i| S::max_of(m, a[i][i].abs_val()));
        let mut rank = n;
        for k in 0..n {
            let p = (k..n).fold(k, |best, i| if a[i][i].abs_val() > a[best][best].abs_val() { i } else { best });
            if a[p][p].negligible_against(&scale) || !(a[p][p] > S::zero()) {
                rank = k;
                break;
            }
            a.swap(k, p);
            for row in a.iter_mut() {
                row.swap(k, p);
            }
            perm.swap(k, p);
            let dk = a[k][k].clone();
            for i in k + 1..n {
                a[i][k] = a[i][k].clone() / dk.clone();
            }
            for i in k + 1..n {
                for j in k + 1..=i {
                    let v = a[i][j].clone() - a[i][k].clone() * a[j][k].clone() * dk.clone();
                    a[i][j] = v.clone();
                    a[j][i] = v;
                }
            }
        }
        let d = (0..rank).map(|i| a[i][i].clone()).collect();
        Self { perm, rank, l: a, d }
    }

    fn dim(&self) -> usize {
        self.perm.len()
    }

    fn solve(&self, b: &[S]) -> Vec<S> {
        let r = self.rank;
        let mut y: Vec<S> = (0..r).map(|i| b[self.perm[i]].clone()).collect();
        for i in 0..r {
            for j in 0..i {
                y[i] = y[i].clone() - self.l[i][j].clone() * y[j].clone();
            }
        }
        for i in 0..r {
            y[i] = y[i].clone() / self.d[i].clone();
        }
        for i in (0..r).rev() {
            for j in i + 1..r {
                y[i] = y[i].clone() - self.l[j][i].clone() * y[j].clone();
            }
        }
        let mut c = vec![S::zero(); self.dim()];
        for i in 0..r {
            c[self.perm[i]] = y[i].clone();
        }
        c
    }
}

/// Per-state projection data, reusable across martingales on one lattice.
#[derive(Debug, Clone)]
struct NodeProjector<S> {
    /// `features[τ][k]`: basis function `k` on transition `τ`.
    features: Vec<Vec<S>>,
    solver: SymSolver<S>,
}

/// Factorized normal equations of every state of a lattice.
#[derive(Debug, Clone)]
pub struct Projector<S> {
    dim: usize,
    view: JumpMeasureView<S>,
    nodes: Vec<Vec<NodeProjector<S>>>,
    shape: Vec<Vec<usize>>,
}

impl<S: Scalar> Projector<S> {
    /// Validate (M2′) and factorize every state's Gram matrix.
    pub fn new(basis: &LatticeBasis<S>) -> Result<Self, GkwError> {
        if let M2Verdict::Fail(w) = validate_m2prime(basis) {
            return Err(GkwError::M2Violation(w));
        }
        let view = basis.compensator();
        let dim = basis.dim();
        let mut nodes = Vec::with_capacity(basis.steps());
        for j in 0..basis.steps() {
            let mut layer = Vec::with_capacity(basis.layer(j).len());
            for (s, node) in basis.layer(j).iter().enumerate() {
                let nm = &view.nodes[j][s];
                let features: Vec<Vec<S>> = node
                    .transitions
                    .iter()
                    .zip(&nm.of_transition)
                    .map(|(tr, idx)| {
                        let mut f = tr.circ.clone();
                        for (x, p) in nm.probs.iter().enumerate() {
                            let ind = if *idx == Some(x) { S::one() } else { S::zero() };
                            f.push(ind - p.clone());
                        }
                        f
                    })
                    .collect();
                let n = dim + nm.marks.len();
                let mut gram = vec![vec![S::zero(); n]; n];
                for (tr, f) in node.transitions.iter().zip(&features) {
                    for a in 0..n {
                        let pa = tr.prob.clone() * f[a].clone();
                        for b in 0..=a {
                            gram[a][b] = gram[a][b].clone() + pa.clone() * f[b].clone();
                        }
                    }
                }
                for a in 0..n {
                    for b in a + 1..n {
                        gram[a][b] = gram[b][a].clone();
                    }
                }
                layer.push(NodeProjector { features, solver: SymSolver::new(gram) });
            }
            nodes.push(layer);
        }
        let shape = basis.layers().iter().map(|l| l.iter().map(|n| n.transitions.len()).collect()).collect();
        Ok(Self { dim, view, nodes, shape })
    }

    /// States whose Gram matrix is singular.
    pub fn rank_deficient_states(&self) -> usize {
        self.nodes.iter().flatten().filter(|n| n.solver.rank < n.solver.dim()).count()
    }

    pub fn view(&self) -> &JumpMeasureView<S> {
        &self.view
    }

    fn fits(&self, basis: &LatticeBasis<S>) -> bool {
        let shape: Vec<Vec<usize>> =
            basis.layers().iter().map(|l| l.iter().map(|n| n.transitions.len()).collect()).collect();
        shape == self.shape && basis.dim() == self.dim
    }

    /// Decompose a martingale given by its increments.
    pub fn decompose(&self, basis: &LatticeBasis<S>, y: &TransitionProcess<S>) -> Result<Decomposition<S>, GkwError> {
        if !self.fits(basis) {
            return Err(LatticeError::Mismatch.into());
        }
        y.require_martingale(basis, MARTINGALE_TOLERANCE)?;
        let dim = self.dim;
        let mut z = Vec::with_capacity(basis.steps());
        let mut u = Vec::with_capacity(basis.steps());
        let mut zx = Vec::with_capacity(basis.steps());
        let mut um = Vec::with_capacity(basis.steps());
        let mut nn = Vec::with_capacity(basis.steps());
        for j in 0..basis.steps() {
            let (mut zl, mut ul, mut zxl, mut uml, mut nl) = (vec![], vec![], vec![], vec![], vec![]);
            for (s, node) in basis.layer(j).iter().enumerate() {
                let np = &self.nodes[j][s];
                let dy = &y.increments[j][s];
                let n = np.solver.dim();
                let mut rhs = vec![S::zero(); n];
                for ((tr, f), d) in node.transitions.iter().zip(&np.features).zip(dy) {
                    let pd = tr.prob.clone() * d.clone();
                    for k in 0..n {
                        rhs[k] = rhs[k].clone() + pd.clone() * f[k].clone();
                    }
                }
                let c = np.solver.solve(&rhs);
                let (zc, uc) = c.split_at(dim);
                let (mut a, mut b, mut r) = (vec![], vec![], vec![]);
                for (f, d) in np.features.iter().zip(dy) {
                    let zpart = (0..dim).fold(S::zero(), |acc, i| acc + zc[i].clone() * f[i].clone());
                    let upart = (0..uc.len()).fold(S::zero(), |acc, x| acc + uc[x].clone() * f[dim + x].clone());
                    r.push(d.clone() - zpart.clone() - upart.clone());
                    a.push(zpart);
                    b.push(upart);
                }
                zl.push(zc.to_vec());
                ul.push(uc.to_vec());
                zxl.push(a);
                uml.push(b);
                nl.push(r);
            }
            z.push(zl);
            u.push(ul);
            zx.push(zxl);
            um.push(uml);
            nn.push(nl);
        }
        let z_dot_x = TransitionProcess { initial: S::zero(), increments: zx };
        let u_star_mu = TransitionProcess { initial: S::zero(), increments: um };
        let n = TransitionProcess { initial: S::zero(), increments: nn };
        let mut d = Decomposition {
            y0: y.initial.clone(),
            z,
            u,
            marks: self.view.clone(),
            y: y.clone(),
            z_dot_x,
            u_star_mu,
            n,
            diagnostics: Diagnostics::default(),
        };
        d.diagnostics = d.diagnose(basis, self.rank_deficient_states());
        Ok(d)
    }
}

/// Residual norms of a decomposition. All should vanish.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Largest `|ΔY − Δ(Z·X∘) − Δ(U⋆μ̃) − ΔN|`.
    pub reconstruction: f64,
    /// Largest `|E[ΔN ΔX∘_i | state]|`.
    pub circ_orthogonality: f64,
    /// Largest `|E[ΔN 1_{mark = x} | state]|`.
    pub mark_orthogonality: f64,
    /// Largest `|E[Δ(Z·X∘) Δ(U⋆μ̃) | state]|`.
    pub integral_orthogonality: f64,
    /// Largest conditional drift among `N`, `Z·X∘` and `U⋆μ̃`.
    pub martingale_drift: f64,
    /// `E[(Y_T − Y_0)²]`.
    pub energy_total: f64,
    /// `E⟨Z·X∘⟩_T`, `E⟨U⋆μ̃⟩_T`, `E⟨N⟩_T`.
    pub energy_parts: [f64; 3],
    /// `|E[(Y_T − Y_0)²] − ΣE⟨·⟩_T|`, computed in the scalar type.
    pub energy_residual: f64,
    pub rank_deficient_states: usize,
}

impl Diagnostics {
    /// Largest of the residuals that must vanish.
    pub fn worst(&self) -> f64 {
        [
            self.reconstruction,
            self.circ_orthogonality,
            self.mark_orthogonality,
            self.integral_orthogonality,
            self.martingale_drift,
            self.energy_residual,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<S> {
    pub y0: S,
    /// `z[j][s][i]`: coefficient of `ΔX∘_i` out of state `s` at step `j`.
    pub z: Vec<Vec<Vec<S>>>,
    /// `u[j][s][x]`: value of `U` at mark `marks.nodes[j][s].marks[x]`.
    pub u: Vec<Vec<Vec<S>>>,
    pub marks: JumpMeasureView<S>,
    pub y: TransitionProcess<S>,
    pub z_dot_x: TransitionProcess<S>,
    pub u_star_mu: TransitionProcess<S>,
    pub n: TransitionProcess<S>,
    pub diagnostics: Diagnostics,
}

fn expected_bracket<S: Scalar>(basis: &LatticeBasis<S>, a: &TransitionProcess<S>, b: &TransitionProcess<S>) -> S {
    predictable_covariation_unchecked(basis, a, b).expected(basis).pop().unwrap()
}

impl<S: Scalar> Decomposition<S> {
    /// `U` at a given mark out of state `s` at step `j`; zero for marks that
    /// cannot occur there.
    pub fn u_at(&self, j: usize, s: usize, mark: &[S]) -> S {
        let nm = &self.marks.nodes[j][s];
        nm.marks.iter().position(|m| m.as_slice() == mark).map_or_else(S::zero, |x| self.u[j][s][x].clone())
    }

    fn diagnose(&self, basis: &LatticeBasis<S>, rank_deficient_states: usize) -> Diagnostics {
        let mut g = Diagnostics { rank_deficient_states, ..Diagnostics::default() };
        let upd = |slot: &mut f64, v: S| *slot = slot.max(v.abs_val().to_f64_lossy());
        for j in 0..basis.steps() {
            for (s, node) in basis.layer(j).iter().enumerate() {
                let nm = &self.marks.nodes[j][s];
                let dn = &self.n.increments[j][s];
                let (dzx, dum) = (&self.z_dot_x.increments[j][s], &self.u_star_mu.increments[j][s]);
                for (t, d) in self.y.increments[j][s].iter().enumerate() {
                    upd(&mut g.reconstruction, d.clone() - dzx[t].clone() - dum[t].clone() - dn[t].clone());
                }
                let ev = |f: &dyn Fn(usize) -> S| {
                    node.transitions.iter().enumerate().fold(S::zero(), |acc, (t, tr)| acc + tr.prob.clone() * f(t))
                };
                for i in 0..basis.dim() {
                    upd(&mut g.circ_orthogonality, ev(&|t| dn[t].clone() * node.transitions[t].circ[i].clone()));
                }
                for x in 0..nm.marks.len() {
                    upd(
                        &mut g.mark_orthogonality,
                        ev(&|t| if nm.of_transition[t] == Some(x) { dn[t].clone() } else { S::zero() }),
                    );
                }
                upd(&mut g.integral_orthogonality, ev(&|t| dzx[t].clone() * dum[t].clone()));
            }
        }
        g.martingale_drift =
            [&self.n, &self.z_dot_x, &self.u_star_mu].iter().map(|p| p.max_drift(basis).0).fold(0.0, f64::max);
        let total = self.y.terminal_second_moment(basis, &self.y0);
        let parts = [
            expected_bracket(basis, &self.z_dot_x, &self.z_dot_x),
            expected_bracket(basis, &self.u_star_mu, &self.u_star_mu),
            expected_bracket(basis, &self.n, &self.n),
        ];
        let sum = parts.iter().fold(S::zero(), |acc, p| acc + p.clone());
        g.energy_total = total.to_f64_lossy();
        g.energy_parts = [parts[0].to_f64_lossy(), parts[1].to_f64_lossy(), parts[2].to_f64_lossy()];
        g.energy_residual = (total - sum).abs_val().to_f64_lossy();
        g
    }

    /// CSV dump with columns `time,state,Z_1..Z_l,N,U@mark...`. `N` is the
    /// mean of the residual martingale given the state; `U` cells are empty
    /// for marks that cannot occur out of that state.
    pub fn write_csv<W: Write>(&self, basis: &LatticeBasis<S>, out: W) -> std::io::Result<()> {
        let mut w = ::csv::Writer::from_writer(out);
        let all_marks = self.marks.distinct_marks();
        let label = |m: &Vec<S>| m.iter().map(|x| x.to_f64_lossy().to_string()).collect::<Vec<_>>().join(";");
        let mut header = vec!["time".to_string(), "state".to_string()];
        header.extend((1..=basis.dim()).map(|i| format!("Z_{i}")));
        header.push("N".into());
        header.extend(all_marks.iter().map(|m| format!("U@{}", label(m))));
        w.write_record(&header)?;
        let n_means = self.n.state_means(basis);
        for j in 0..basis.steps() {
            let t = basis.times()[j].to_f64_lossy().to_string();
            for s in 0..basis.layer(j).len() {
                let mut row = vec![t.clone(), s.to_string()];
                row.extend(self.z[j][s].iter().map(|z| z.to_f64_lossy().to_string()));
                row.push(n_means[j][s].to_f64_lossy().to_string());
                let nm = &self.marks.nodes[j][s];
                for m in &all_marks {
                    row.push(match nm.marks.iter().position(|x| x == m) {
                        Some(x) => self.u[j][s][x].to_f64_lossy().to_string(),
                        None => String::new(),
                    });
                }
                w.write_record(&row)?;
            }
        }
        w.flush()
    }
}

/// Decompose a martingale given as a function of the state.
pub fn decompose<S: Scalar>(basis: &LatticeBasis<S>, y: &AdaptedProcess<S>) -> Result<Decomposition<S>, GkwError> {
    let inc = y.increments(basis)?;
    Projector::new(basis)?.decompose(basis, &inc)
}

/// Decompose a martingale given by its increments.
pub fn decompose_increments<S: Scalar>(
    basis: &LatticeBasis<S>,
    y: &TransitionProcess<S>,
) -> Result<Decomposition<S>, GkwError> {
    Projector::new(basis)?.decompose(basis, y)
}

/// Predictable brackets associated with a decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleBrackets<S> {
    pub y: TransitionProcess<S>,
    /// `⟨Y, X_i⟩` with `X = X∘ + X♮`.
    pub y_x: Vec<TransitionProcess<S>>,
    pub y_circ: Vec<TransitionProcess<S>>,
    pub y_nat: Vec<TransitionProcess<S>>,
    pub n: TransitionProcess<S>,
    pub y_n: TransitionProcess<S>,
    pub z_dot_x: TransitionProcess<S>,
    pub u_star_mu: TransitionProcess<S>,
}

impl<S: Scalar> AngleBrackets<S> {
    /// Largest `|Δ⟨Y,N⟩ − Δ⟨N⟩|`.
    pub fn yn_residual(&self) -> f64 {
        self.y_n.sub(&self.n).expect("same lattice").max_abs_increment()
    }

    /// Largest `|Δ⟨Y⟩ − Δ⟨Z·X∘⟩ − Δ⟨U⋆μ̃⟩ − Δ⟨N⟩|`.
    pub fn additivity_residual(&self) -> f64 {
        self.y
            .sub(&self.z_dot_x)
            .and_then(|p| p.sub(&self.u_star_mu))
            .and_then(|p| p.sub(&self.n))
            .expect("same lattice")
            .max_abs_increment()
    }

    /// Largest `|⟨Y,X∘⟩ + ⟨Y,X♮⟩ − ⟨Y,X⟩|` over coordinates.
    pub fn split_residual(&self) -> f64 {
        self.y_x
            .iter()
            .zip(self.y_circ.iter().zip(&self.y_nat))
            .map(|(x, (c, n))| c.add(n).and_then(|s| s.sub(x)).expect("same lattice").max_abs_increment())
            .fold(0.0, f64::max)
    }
}

pub fn angle_brackets<S: Scalar>(basis: &LatticeBasis<S>, d: &Decomposition<S>) -> Result<AngleBrackets<S>, GkwError> {
    d.y.check(basis)?;
    if d.marks.nodes.len() != basis.steps() {
        return Err(LatticeError::Mismatch.into());
    }
    let b = |a: &TransitionProcess<S>, c: &TransitionProcess<S>| predictable_covariation_unchecked(basis, a, c);
    let circ: Vec<_> = (0..basis.dim()).map(|i| basis.circ_process(i)).collect();
    let nat: Vec<_> = (0..basis.dim()).map(|i| basis.nat_process(i)).collect();
    let x: Vec<_> = circ.iter().zip(&nat).map(|(c, n)| c.add(n).expect("same lattice")).collect();
    Ok(AngleBrackets {
        y: b(&d.y, &d.y),
        y_x: x.iter().map(|xi| b(&d.y, xi)).collect(),
        y_circ: circ.iter().map(|c| b(&d.y, c)).collect(),
        y_nat: nat.iter().map(|n| b(&d.y, n)).collect(),
        n: b(&d.n, &d.n),
        y_n: b(&d.y, &d.n),
        z_dot_x: b(&d.z_dot_x, &d.z_dot_x),
        u_star_mu: b(&d.u_star_mu, &d.u_star_mu),
    })
}
