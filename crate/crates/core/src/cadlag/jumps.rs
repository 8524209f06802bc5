//! Jump windows, the successive jump times falling into a window, and
//! additive functionals of the jumps.

use super::{CadlagPath, PathError};
use crate::scalar::Real;

/// Constraint on one coordinate of a jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interval<T> {
    FullLine,
    /// Open interval `(v, w)` with `v < w` and `v·w > 0`, i.e. bounded away
    /// from zero on one side of it.
    Open(T, T),
}

impl<T: Real> Interval<T> {
    pub fn contains(&self, x: T) -> bool {
        match *self {
            Interval::FullLine => true,
            Interval::Open(v, w) => v < x && x < w,
        }
    }
}

/// A product of per-coordinate intervals, at least one of them bounded
/// away from zero. Membership only constrains the restricted coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpWindow<T> {
    intervals: Vec<Interval<T>>,
}

impl<T: Real> JumpWindow<T> {
    pub fn new(intervals: Vec<Interval<T>>) -> Result<Self, PathError> {
        if intervals.is_empty() {
            return Err(PathError::BadWindow("no coordinates".into()));
        }
        for iv in &intervals {
            if let Interval::Open(v, w) = *iv {
                if !(v < w) || !(v * w > T::zero()) {
                    return Err(PathError::BadWindow(format!(
                        "({}, {}) must satisfy v < w and v·w > 0",
                        v.to_f64_lossy(),
                        w.to_f64_lossy()
                    )));
                }
            }
        }
        if intervals.iter().all(|iv| matches!(iv, Interval::FullLine)) {
            return Err(PathError::BadWindow("the whole space is not a window".into()));
        }
        Ok(Self { intervals })
    }

    /// One-dimensional window `(v, w)`.
    pub fn scalar(v: T, w: T) -> Result<Self, PathError> {
        Self::new(vec![Interval::Open(v, w)])
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[Interval<T>] {
        &self.intervals
    }

    /// Indices of the restricted coordinates.
    pub fn restricted(&self) -> impl Iterator<Item = usize> + '_ {
        self.intervals.iter().enumerate().filter(|(_, iv)| !matches!(iv, Interval::FullLine)).map(|(i, _)| i)
    }

    pub fn contains(&self, x: &[T]) -> bool {
        self.restricted().all(|i| self.intervals[i].contains(x[i]))
    }

    /// Whether some jump magnitude of `path` sits on a window endpoint, in
    /// which case the jump times are not continuous at `path`.
    pub fn touches(&self, path: &CadlagPath<T>) -> bool {
        path.jumps().iter().any(|j| {
            self.restricted().any(|i| match self.intervals[i] {
                Interval::Open(v, w) => j.delta[i] == v || j.delta[i] == w,
                Interval::FullLine => false,
            })
        })
    }
}

fn check_window<T: Real>(path: &CadlagPath<T>, window: &JumpWindow<T>) -> Result<(), PathError> {
    if path.dim() != window.dim() {
        return Err(PathError::DimensionMismatch { left: path.dim(), right: window.dim() });
    }
    Ok(())
}

/// Time of the `n`-th jump lying in `window`; `None` when fewer than `n`
/// such jumps exist. `n = 0` gives time zero.
pub fn jump_time<T: Real>(path: &CadlagPath<T>, window: &JumpWindow<T>, n: usize) -> Result<Option<T>, PathError> {
    check_window(path, window)?;
    if n == 0 {
        return Ok(Some(T::zero()));
    }
    Ok(path.jumps().iter().filter(|j| window.contains(&j.delta)).nth(n - 1).map(|j| j.time))
}

/// `t ↦ Σ_{0<s≤t} g(Δα_s) 1_I(Δα_s)` as a one-dimensional path.
pub fn jump_functional<T: Real>(
    path: &CadlagPath<T>,
    g: impl Fn(&[T]) -> T,
    window: &JumpWindow<T>,
) -> Result<CadlagPath<T>, PathError> {
    check_window(path, window)?;
    let jumps =
        path.jumps().iter().filter(|j| window.contains(&j.delta)).map(|j| (j.time, vec![g(&j.delta)])).collect();
    CadlagPath::step(path.horizon(), vec![T::zero()], jumps)
}

/// The input path with the jump functional appended as a last coordinate.
pub fn jump_functional_joint<T: Real>(
    path: &CadlagPath<T>,
    g: impl Fn(&[T]) -> T,
    window: &JumpWindow<T>,
) -> Result<CadlagPath<T>, PathError> {
    let extra = jump_functional(path, g, window)?;
    CadlagPath::stack(&[path, &extra])
}

/// `Σ_i (|x_i| ∧ 1)^p`.
pub fn r_p<T: Real>(x: &[T], p: T) -> Result<T, PathError> {
    if !(p > T::zero()) {
        return Err(PathError::NonPositiveExponent(p.to_f64_lossy()));
    }
    Ok(x.iter()
        .map(|&xi| {
            let m = xi.abs().min(T::one());
            if m.is_zero() {
                T::zero()
            } else {
                m.powf(p)
            }
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_jumps() -> CadlagPath<f64> {
        CadlagPath::scalar_step(4.0, 0.0, &[(1.0, 2.0), (3.0, 0.5)]).unwrap()
    }

    #[test]
    fn window_validation() {
        assert!(JumpWindow::scalar(1.0, 3.0).is_ok());
        assert!(JumpWindow::scalar(-1.0, 3.0).is_err());
        assert!(JumpWindow::scalar(0.0, 3.0).is_err());
        assert!(JumpWindow::scalar(3.0, 1.0).is_err());
        assert!(JumpWindow::<f64>::new(vec![Interval::FullLine, Interval::FullLine]).is_err());
        assert!(JumpWindow::new(vec![Interval::FullLine, Interval::Open(-2.0, -0.5)]).is_ok());
    }

    #[test]
    fn first_jump_in_window() {
        let w = JumpWindow::scalar(1.0, 3.0).unwrap();
        assert_eq!(jump_time(&two_jumps(), &w, 0).unwrap(), Some(0.0));
        assert_eq!(jump_time(&two_jumps(), &w, 1).unwrap(), Some(1.0));
        assert_eq!(jump_time(&two_jumps(), &w, 2).unwrap(), None);
    }

    #[test]
    fn two_dimensional_window() {
        let p = CadlagPath::step(3.0, vec![0.0, 0.0], vec![(1.0, vec![2.0, 0.0]), (2.0, vec![1.5, -1.0])]).unwrap();
        let w = JumpWindow::new(vec![Interval::Open(1.0, 3.0), Interval::Open(-2.0, -0.5)]).unwrap();
        assert_eq!(jump_time(&p, &w, 1).unwrap(), Some(2.0));
    }

    #[test]
    fn r_p_values() {
        assert_eq!(r_p(&[0.5, 2.0], 2.0).unwrap(), 1.25);
        assert_eq!(r_p(&[0.0, 0.0], 0.5).unwrap(), 0.0);
        assert_eq!(r_p(&[0.3], 1.0).unwrap(), 0.3);
        assert!(r_p(&[0.3], 0.0).is_err());
        assert!(r_p(&[0.3], -1.0).is_err());
    }

    #[test]
    fn functional_with_r2() {
        let p = CadlagPath::scalar_step(2.0, 0.0, &[(1.0, 0.5)]).unwrap();
        let w = JumpWindow::scalar(0.0f64.next_up(), 1.0).unwrap();
        let f = jump_functional(&p, |x| r_p(x, 2.0).unwrap(), &w).unwrap();
        assert_eq!(f.evaluate(0.9), vec![0.0]);
        assert_eq!(f.evaluate(1.0), vec![0.25]);
    }

    #[test]
    fn functional_without_jumps_in_window() {
        let w = JumpWindow::scalar(5.0, 6.0).unwrap();
        let f = jump_functional(&two_jumps(), |x| x[0], &w).unwrap();
        assert!(f.jumps().is_empty());
        assert_eq!(f.terminal(), vec![0.0]);
    }

    #[test]
    fn functional_identity_sums_jumps() {
        let p = CadlagPath::scalar_step(3.0, 0.0, &[(1.0, 2.0), (2.0, 1.5)]).unwrap();
        let w = JumpWindow::scalar(1.0, 3.0).unwrap();
        let f = jump_functional(&p, |x| x[0], &w).unwrap();
        assert_eq!(f.evaluate(1.5), vec![2.0]);
        assert_eq!(f.evaluate(2.0), vec![3.5]);
        let joint = jump_functional_joint(&p, |x| x[0], &w).unwrap();
        assert_eq!(joint.dim(), 2);
        assert_eq!(joint.evaluate(2.0), vec![3.5, 3.5]);
    }
}
