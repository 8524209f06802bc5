//! Quadratic covariation, predictable covariation, total variation and
//! trace, on step paths and on lattices.
//!
//! Pathwise brackets sum products of increments over all change times of
//! the paths. For a sampled continuous component this is the quadratic
//! variation of the sampled increments, i.e. the bracket of the grid-level
//! object. On a lattice, `⟨a, b⟩` accumulates `E[Δa Δb | state]`.

use thiserror::Error;

use crate::cadlag::{CadlagPath, PathError};
use crate::lattice::{LatticeBasis, LatticeError, LatticePath, TransitionProcess};
use crate::scalar::{Real, Scalar};

/// Conditional drift above which an input is not accepted as a martingale.
pub const MARTINGALE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BracketError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("paths live on different horizons")]
    HorizonMismatch,
    #[error("expected a one-dimensional path, got dimension {0}")]
    NotScalar(usize),
    #[error("bracket matrix must be square and nonempty")]
    NotSquare,
}

/// Common change times of `a` and `b` with the increments of each there.
fn joint_increments<T: Real>(a: &CadlagPath<T>, b: &CadlagPath<T>) -> (Vec<T>, Vec<Vec<T>>, Vec<Vec<T>>) {
    let mut times = a.change_times();
    times.extend(b.change_times());
    times.sort_by(|x, y| x.partial_cmp(y).unwrap());
    times.dedup();
    let diff = |p: &CadlagPath<T>| {
        let vals = p.values_at_sorted(&times);
        let mut prev = p.initial().to_vec();
        vals.into_iter()
            .map(|v| {
                let d = v.iter().zip(&prev).map(|(&x, &y)| x - y).collect();
                prev = v;
                d
            })
            .collect::<Vec<Vec<T>>>()
    };
    let (da, db) = (diff(a), diff(b));
    (times, da, db)
}

fn check_pair<T: Real>(a: &CadlagPath<T>, b: &CadlagPath<T>) -> Result<(), BracketError> {
    if a.horizon() != b.horizon() {
        return Err(BracketError::HorizonMismatch);
    }
    Ok(())
}

fn scalar_path<T: Real>(
    horizon: T,
    times: Vec<T>,
    increments: impl Iterator<Item = T>,
) -> Result<CadlagPath<T>, PathError> {
    CadlagPath::step(horizon, vec![T::zero()], times.into_iter().zip(increments).map(|(t, d)| (t, vec![d])).collect())
}

/// `[a, b]_t = Σ_{s ≤ t} Δa_s Δb_s` for one-dimensional paths.
pub fn quadratic_covariation<T: Real>(a: &CadlagPath<T>, b: &CadlagPath<T>) -> Result<CadlagPath<T>, BracketError> {
    check_pair(a, b)?;
    for p in [a, b] {
        if p.dim() != 1 {
            return Err(BracketError::NotScalar(p.dim()));
        }
    }
    let (times, da, db) = joint_increments(a, b);
    Ok(scalar_path(a.horizon(), times, da.iter().zip(&db).map(|(x, y)| x[0] * y[0]))?)
}

/// Matrix `([a^i, b^j])_{i,j}` for vector paths.
pub fn quadratic_covariation_matrix<T: Real>(
    a: &CadlagPath<T>,
    b: &CadlagPath<T>,
) -> Result<Vec<Vec<CadlagPath<T>>>, BracketError> {
    check_pair(a, b)?;
    let (times, da, db) = joint_increments(a, b);
    let mut out = Vec::with_capacity(a.dim());
    for i in 0..a.dim() {
        let mut row = Vec::with_capacity(b.dim());
        for j in 0..b.dim() {
            row.push(scalar_path(a.horizon(), times.clone(), da.iter().zip(&db).map(|(x, y)| x[i] * y[j]))?);
        }
        out.push(row);
    }
    Ok(out)
}

/// `Var(a)_t`, the sum of the norms of the increments up to `t`.
pub fn total_variation<T: Real>(a: &CadlagPath<T>) -> Result<CadlagPath<T>, BracketError> {
    let (times, da, _) = joint_increments(a, a);
    let norm = |d: &Vec<T>| d.iter().map(|&x| x * x).sum::<T>().sqrt();
    Ok(scalar_path(a.horizon(), times, da.iter().map(norm))?)
}

/// Sum of the diagonal entries of a square bracket matrix.
pub fn trace<T: Real>(m: &[Vec<CadlagPath<T>>]) -> Result<CadlagPath<T>, BracketError> {
    if m.is_empty() || m.iter().any(|r| r.len() != m.len()) {
        return Err(BracketError::NotSquare);
    }
    let mut acc = m[0][0].clone();
    for (i, row) in m.iter().enumerate().skip(1) {
        acc = acc.add(&row[i])?;
    }
    Ok(acc)
}

/// `Var([a, b])_T − ([a]_T [b]_T)^{1/2}`; nonpositive by Kunita–Watanabe.
pub fn kunita_watanabe_gap<T: Real>(a: &CadlagPath<T>, b: &CadlagPath<T>) -> Result<T, BracketError> {
    let ab = quadratic_covariation(a, b)?;
    let var = total_variation(&ab)?.terminal()[0];
    let aa = quadratic_covariation(a, a)?.terminal()[0];
    let bb = quadratic_covariation(b, b)?.terminal()[0];
    Ok(var - (aa * bb).sqrt())
}

/// `[a, b]` on a lattice.
pub fn lattice_quadratic_covariation<S: Scalar>(
    basis: &LatticeBasis<S>,
    a: &TransitionProcess<S>,
    b: &TransitionProcess<S>,
) -> Result<TransitionProcess<S>, BracketError> {
    a.check(basis)?;
    b.check(basis)?;
    Ok(a.zip_with(b, |x, y| x.clone() * y.clone())?.centred())
}

/// `⟨a, b⟩` on a lattice. Both inputs must be martingales.
pub fn predictable_covariation<S: Scalar>(
    basis: &LatticeBasis<S>,
    a: &TransitionProcess<S>,
    b: &TransitionProcess<S>,
) -> Result<TransitionProcess<S>, BracketError> {
    a.require_martingale(basis, MARTINGALE_TOLERANCE)?;
    b.require_martingale(basis, MARTINGALE_TOLERANCE)?;
    Ok(predictable_covariation_unchecked(basis, a, b))
}

/// `Σ E[Δa Δb | state]` without the martingale check.
pub fn predictable_covariation_unchecked<S: Scalar>(
    basis: &LatticeBasis<S>,
    a: &TransitionProcess<S>,
    b: &TransitionProcess<S>,
) -> TransitionProcess<S> {
    TransitionProcess::predictable_from_fn(basis, S::zero(), |j, s| {
        basis
            .node(j, s)
            .transitions
            .iter()
            .zip(a.increments[j][s].iter().zip(&b.increments[j][s]))
            .fold(S::zero(), |acc, (tr, (x, y))| acc + tr.prob.clone() * x.clone() * y.clone())
    })
}

/// `⟨a⟩`.
pub fn predictable_variation<S: Scalar>(
    basis: &LatticeBasis<S>,
    a: &TransitionProcess<S>,
) -> Result<TransitionProcess<S>, BracketError> {
    predictable_covariation(basis, a, a)
}

/// `Var(a)` on a lattice.
pub fn lattice_total_variation<S: Scalar>(a: &TransitionProcess<S>) -> TransitionProcess<S> {
    a.centred().map(S::abs_val)
}

/// `⟨a^i, a^j⟩` for a vector martingale given by its coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketMatrix<S> {
    pub entries: Vec<Vec<TransitionProcess<S>>>,
}

impl<S: Scalar> BracketMatrix<S> {
    pub fn predictable(basis: &LatticeBasis<S>, coords: &[TransitionProcess<S>]) -> Result<Self, BracketError> {
        for c in coords {
            c.require_martingale(basis, MARTINGALE_TOLERANCE)?;
        }
        Ok(Self::build(coords, |a, b| predictable_covariation_unchecked(basis, a, b)))
    }

    pub fn optional(basis: &LatticeBasis<S>, coords: &[TransitionProcess<S>]) -> Result<Self, BracketError> {
        for c in coords {
            c.check(basis)?;
        }
        Ok(Self::build(coords, |a, b| a.zip_with(b, |x, y| x.clone() * y.clone()).unwrap().centred()))
    }

    fn build(
        coords: &[TransitionProcess<S>],
        f: impl Fn(&TransitionProcess<S>, &TransitionProcess<S>) -> TransitionProcess<S>,
    ) -> Self {
        Self { entries: coords.iter().map(|a| coords.iter().map(|b| f(a, b)).collect()).collect() }
    }

    pub fn trace(&self) -> Result<TransitionProcess<S>, BracketError> {
        let first = self.entries.first().ok_or(BracketError::NotSquare)?;
        let mut acc = first[0].clone();
        for i in 1..self.entries.len() {
            acc = acc.add(&self.entries[i][i])?;
        }
        Ok(acc)
    }

    /// Matrix value at the end of a lattice path.
    pub fn terminal_along(&self, path: &LatticePath) -> Vec<Vec<S>> {
        self.entries.iter().map(|r| r.iter().map(|e| e.along(path).pop().unwrap()).collect()).collect()
    }
}

/// Largest deviation from `⟨a,b⟩ = ¼(⟨a+b⟩ − ⟨a−b⟩)`, in the predictable
/// bracket and in the optional one.
pub fn polarization_residual<S: Scalar>(
    basis: &LatticeBasis<S>,
    a: &TransitionProcess<S>,
    b: &TransitionProcess<S>,
) -> Result<f64, BracketError> {
    let sum = a.add(b)?;
    let diff = a.sub(b)?;
    let quarter = S::one() / S::from_u8(4).unwrap();
    let mut worst: f64 = 0.0;
    for (direct, plus, minus) in [
        (
            predictable_covariation_unchecked(basis, a, b),
            predictable_covariation_unchecked(basis, &sum, &sum),
            predictable_covariation_unchecked(basis, &diff, &diff),
        ),
        (
            lattice_quadratic_covariation(basis, a, b)?,
            lattice_quadratic_covariation(basis, &sum, &sum)?,
            lattice_quadratic_covariation(basis, &diff, &diff)?,
        ),
    ] {
        let polar = plus.sub(&minus)?.scale(&quarter);
        worst = worst.max(direct.sub(&polar)?.max_abs_increment());
    }
    Ok(worst)
}
