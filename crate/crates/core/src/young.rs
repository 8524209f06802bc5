//! Young functions: convex, nondecreasing maps `[0, ∞) → [0, ∞]` vanishing
//! at zero. Supports evaluation, conjugation, the `Δ₂` (moderateness)
//! constant and composition with `quad(x) = x²/2`.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum YoungError {
    #[error("power law needs coefficient > 0 and exponent > 1")]
    BadPower,
    #[error("breakpoints must start at 0, increase strictly and carry nondecreasing nonnegative slopes")]
    BadBreakpoints,
    #[error("function must eventually increase")]
    Flat,
    #[error("grid must be nonempty, start at 0 and increase strictly")]
    BadGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum YoungFunction<T> {
    /// `coeff · x^exponent`.
    Power { coeff: T, exponent: T },
    /// Piecewise linear: slope `slopes[i]` on `[knots[i], knots[i+1])`, the
    /// last slope continuing to `limit` (or to infinity), `+∞` beyond `limit`.
    Breakpoints { knots: Vec<T>, slopes: Vec<T>, limit: Option<T> },
    /// `f(x²/2)`.
    Composed(Box<YoungFunction<T>>),
}

/// `Δ₂` constant `sup_x f(2x)/f(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moderate<T> {
    Bounded(T),
    Unbounded,
}

/// Growth of `f(x)` against `x²` at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    SubQuadratic,
    Quadratic,
    SuperQuadratic,
}

/// Ratio above which a scanned `Δ₂` constant is reported as unbounded.
pub const UNBOUNDED_THRESHOLD: f64 = 1e6;

impl<T: Real> YoungFunction<T> {
    pub fn power(coeff: T, exponent: T) -> Result<Self, YoungError> {
        if !(coeff > T::zero()) || !(exponent > T::one()) || !coeff.is_finite() || !exponent.is_finite() {
            return Err(YoungError::BadPower);
        }
        Ok(Self::Power { coeff, exponent })
    }

    /// `x^p / p`.
    pub fn normalized_power(p: T) -> Result<Self, YoungError> {
        Self::power(T::one() / p, p)
    }

    pub fn breakpoints(knots: Vec<T>, slopes: Vec<T>, limit: Option<T>) -> Result<Self, YoungError> {
        let ok = !knots.is_empty()
            && knots.len() == slopes.len()
            && knots[0].is_zero()
            && knots.windows(2).all(|w| w[1] > w[0])
            && slopes.iter().all(|s| *s >= T::zero() && s.is_finite())
            && slopes.windows(2).all(|w| w[1] >= w[0])
            && limit.is_none_or(|l| l > *knots.last().unwrap());
        if !ok {
            return Err(YoungError::BadBreakpoints);
        }
        if limit.is_none() && slopes.last().unwrap().is_zero() {
            return Err(YoungError::Flat);
        }
        Ok(Self::Breakpoints { knots, slopes, limit })
    }

    /// `x ↦ x`.
    pub fn identity() -> Self {
        Self::Breakpoints { knots: vec![T::zero()], slopes: vec![T::one()], limit: None }
    }

    pub fn eval(&self, x: T) -> T {
        let x = x.max(T::zero());
        match self {
            Self::Power { coeff, exponent } => {
                if x.is_zero() {
                    T::zero()
                } else {
                    *coeff * x.powf(*exponent)
                }
            }
            Self::Breakpoints { knots, slopes, limit } => {
                if limit.is_some_and(|l| x > l) {
                    return T::infinity();
                }
                let mut acc = T::zero();
                for i in 0..knots.len() {
                    let end = knots.get(i + 1).copied().unwrap_or_else(T::infinity);
                    if x <= end {
                        return acc + slopes[i] * (x - knots[i]);
                    }
                    acc = acc + slopes[i] * (end - knots[i]);
                }
                acc
            }
            Self::Composed(f) => f.eval(x * x / T::lit(2.0)),
        }
    }

    /// `f*(y) = sup_{x ≥ 0} (xy − f(x))`. Closed form for powers and
    /// breakpoints; otherwise a discrete Legendre transform on `grid`, which
    /// serves both as the set of candidate maximizers and as the knots of the
    /// returned piecewise linear function.
    pub fn conjugate(&self, grid: &[T]) -> Result<Self, YoungError> {
        match self {
            Self::Power { coeff, exponent } => {
                let (c, p) = (*coeff, *exponent);
                let q = p / (p - T::one());
                Self::power(c * (p - T::one()) * (c * p).powf(-q), q)
            }
            Self::Breakpoints { knots, slopes, limit } => {
                // Segment i of f* spans [slopes[i-1], slopes[i]) with slope
                // knots[i]; segment 0 starts at 0 with slope 0.
                let mut k = vec![T::zero()];
                let mut s = vec![T::zero()];
                for i in 0..slopes.len() {
                    let start = slopes[i];
                    let slope = knots.get(i + 1).copied().or(*limit);
                    let end_of_domain = slope.is_none();
                    if start > *k.last().unwrap() {
                        k.push(start);
                        s.push(T::zero());
                    }
                    if end_of_domain {
                        let lim = *k.last().unwrap();
                        k.pop();
                        s.pop();
                        if k.is_empty() {
                            // f* vanishes only at 0: f was linear through the origin with slope 0
                            return Err(YoungError::Flat);
                        }
                        return Self::breakpoints(k, s, Some(lim))
                            .or_else(|_| Self::breakpoints(vec![T::zero()], vec![T::zero()], Some(lim)));
                    }
                    *s.last_mut().unwrap() = slope.unwrap();
                }
                Self::breakpoints(k, s, None)
            }
            Self::Composed(_) => self.grid_conjugate(grid),
        }
    }

    fn grid_conjugate(&self, grid: &[T]) -> Result<Self, YoungError> {
        if grid.is_empty() || !grid[0].is_zero() || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(YoungError::BadGrid);
        }
        let fx: Vec<T> = grid.iter().map(|&x| self.eval(x)).collect();
        let values: Vec<T> =
            grid.iter().map(|&y| grid.iter().zip(&fx).map(|(&x, &f)| x * y - f).fold(T::zero(), T::max)).collect();
        let mut slopes: Vec<T> =
            values.windows(2).zip(grid.windows(2)).map(|(v, g)| (v[1] - v[0]) / (g[1] - g[0])).collect();
        let last = slopes.last().copied().unwrap_or_else(T::one);
        slopes.push(last.max(T::min_positive_value()));
        for i in 1..slopes.len() {
            slopes[i] = slopes[i].max(slopes[i - 1]);
        }
        Self::breakpoints(grid.to_vec(), slopes, None)
    }

    /// `Δ₂` constant: `2^p` for powers, otherwise a scan over `x = 2^i`,
    /// `i ∈ [−40, 40]`.
    pub fn moderate_constant(&self) -> Moderate<T> {
        if let Self::Power { exponent, .. } = self {
            return Moderate::Bounded(T::lit(2.0).powf(*exponent));
        }
        if let Self::Composed(inner) = self {
            if let Self::Power { exponent, .. } = inner.as_ref() {
                return Moderate::Bounded(T::lit(2.0).powf(T::lit(2.0) * *exponent));
            }
        }
        let mut worst = T::one();
        for i in -40..=40 {
            let x = T::lit(2f64.powi(i));
            let (a, b) = (self.eval(x), self.eval(x + x));
            if b.is_infinite() || (a.is_zero() && b > T::zero()) {
                return Moderate::Unbounded;
            }
            if a > T::zero() {
                worst = worst.max(b / a);
            }
        }
        if worst > T::lit(UNBOUNDED_THRESHOLD) {
            Moderate::Unbounded
        } else {
            Moderate::Bounded(worst)
        }
    }

    /// `f ∘ quad`. Powers stay powers; a single linear piece becomes `a x²/2`.
    pub fn compose_quad(&self) -> Self {
        let two = T::lit(2.0);
        match self {
            Self::Power { coeff, exponent } => {
                Self::Power { coeff: *coeff / two.powf(*exponent), exponent: two * *exponent }
            }
            Self::Breakpoints { knots, slopes, limit: None } if knots.len() == 1 => {
                Self::Power { coeff: slopes[0] / two, exponent: two }
            }
            _ => Self::Composed(Box::new(self.clone())),
        }
    }

    /// Growth of `f(x)` relative to `x²` as `x → ∞`.
    pub fn growth(&self) -> Growth {
        let two = T::lit(2.0);
        match self {
            Self::Power { exponent, .. } => {
                if *exponent < two {
                    Growth::SubQuadratic
                } else if *exponent == two {
                    Growth::Quadratic
                } else {
                    Growth::SuperQuadratic
                }
            }
            Self::Breakpoints { limit: Some(_), .. } => Growth::SuperQuadratic,
            Self::Breakpoints { .. } => Growth::SubQuadratic,
            Self::Composed(inner) => match inner.as_ref() {
                Self::Breakpoints { limit: None, .. } => Growth::Quadratic,
                _ => Growth::SuperQuadratic,
            },
        }
    }
}

/// `f(x) + f*(y) − xy`, nonnegative by Young's inequality.
pub fn young_gap<T: Real>(f: &YoungFunction<T>, fstar: &YoungFunction<T>, x: T, y: T) -> T {
    f.eval(x) + fstar.eval(y) - x * y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, top: f64) -> Vec<f64> {
        (0..=n).map(|i| top * i as f64 / n as f64).collect()
    }

    #[test]
    fn quadratic_is_self_conjugate() {
        let f = YoungFunction::normalized_power(2.0).unwrap();
        assert_eq!(f.conjugate(&[]).unwrap(), f);
    }

    #[test]
    fn cubic_conjugate_against_grid_sup() {
        let f = YoungFunction::normalized_power(3.0).unwrap();
        let g = f.conjugate(&[]).unwrap();
        let xs = grid(200_000, 10.0);
        for y in [0.3, 1.0, 2.5, 4.0] {
            let sup = xs.iter().map(|&x| x * y - f.eval(x)).fold(f64::MIN, f64::max);
            let closed: f64 = f64::powf(y, 1.5) / 1.5;
            assert!((sup - closed).abs() < 1e-6);
            assert!((g.eval(y) - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_conjugate_is_indicator() {
        let g = YoungFunction::<f64>::identity().conjugate(&[]).unwrap();
        assert_eq!(g.eval(0.5), 0.0);
        assert_eq!(g.eval(1.0), 0.0);
        assert!(g.eval(1.01).is_infinite());
        let back = g.conjugate(&[]).unwrap();
        assert_eq!(back, YoungFunction::identity());
    }

    #[test]
    fn breakpoint_biconjugation() {
        let f = YoungFunction::breakpoints(vec![0.0, 1.0, 2.5], vec![0.5, 1.0, 3.0], None).unwrap();
        let g = f.conjugate(&[]).unwrap();
        assert_eq!(g.conjugate(&[]).unwrap(), f);
        let xs = grid(4000, 5.0);
        for &y in &[0.2, 0.7, 1.0, 2.0, 2.9] {
            let sup = xs.iter().map(|&x| x * y - f.eval(x)).fold(f64::MIN, f64::max);
            assert!((sup - g.eval(y)).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_start_breakpoints() {
        let f: YoungFunction<f64> = YoungFunction::breakpoints(vec![0.0, 1.0], vec![0.0, 2.0], None).unwrap();
        let g = f.conjugate(&[]).unwrap();
        assert_eq!(g.eval(1.0), 1.0);
        assert!(g.eval(2.5).is_infinite());
        assert_eq!(g.conjugate(&[]).unwrap(), f);
        assert_eq!(f.moderate_constant(), Moderate::Unbounded);
    }

    #[test]
    fn moderate_constants() {
        assert_eq!(YoungFunction::normalized_power(2.0).unwrap().moderate_constant(), Moderate::Bounded(4.0));
        assert_eq!(YoungFunction::normalized_power(3.0).unwrap().moderate_constant(), Moderate::Bounded(8.0));
        let knots: Vec<f64> = (0..60).map(f64::from).collect();
        let slopes: Vec<f64> = (0..60).map(|i| 2f64.powi(i)).collect();
        let exp_like = YoungFunction::breakpoints(knots, slopes, None).unwrap();
        assert_eq!(exp_like.moderate_constant(), Moderate::Unbounded);
        match YoungFunction::<f64>::identity().moderate_constant() {
            Moderate::Bounded(c) => assert!((c - 2.0).abs() < 1e-12),
            Moderate::Unbounded => panic!(),
        }
    }

    #[test]
    fn quad_composition() {
        let id = YoungFunction::<f64>::identity().compose_quad();
        assert_eq!(id, YoungFunction::Power { coeff: 0.5, exponent: 2.0 });
        let q = YoungFunction::normalized_power(2.0).unwrap().compose_quad();
        assert_eq!(q, YoungFunction::Power { coeff: 0.125, exponent: 4.0 });
        let f = YoungFunction::breakpoints(vec![0.0, 1.0], vec![1.0, 2.0], None).unwrap();
        let c = f.compose_quad();
        for x in [0.0, 0.5, 1.3, 2.0, 7.0] {
            assert_eq!(c.eval(x), f.eval(x * x / 2.0));
        }
        let Moderate::Bounded(cf) = f.moderate_constant() else { panic!() };
        assert!(matches!(c.moderate_constant(), Moderate::Bounded(v) if v <= cf * cf + 1e-12));
        assert_eq!(c.growth(), Growth::Quadratic);
    }

    #[test]
    fn grid_conjugate_of_composed() {
        let f = YoungFunction::breakpoints(vec![0.0, 1.0], vec![1.0, 2.0], None).unwrap().compose_quad();
        let xs = grid(2000, 8.0);
        let g = f.conjugate(&xs).unwrap();
        for (i, &x) in xs.iter().enumerate().step_by(97) {
            for &y in xs.iter().step_by(131).skip(i % 3) {
                assert!(young_gap(&f, &g, x, y) >= -1e-12);
            }
        }
    }

    #[test]
    fn validation() {
        assert!(YoungFunction::power(1.0, 1.0).is_err());
        assert!(YoungFunction::power(0.0, 2.0).is_err());
        assert!(YoungFunction::breakpoints(vec![0.0, 1.0], vec![2.0, 1.0], None).is_err());
        assert!(YoungFunction::breakpoints(vec![0.5], vec![1.0], None).is_err());
        assert_eq!(YoungFunction::breakpoints(vec![0.0], vec![0.0], None), Err(YoungError::Flat));
    }

    #[test]
    fn growth_classes() {
        assert_eq!(YoungFunction::normalized_power(1.5).unwrap().growth(), Growth::SubQuadratic);
        assert_eq!(YoungFunction::normalized_power(2.0).unwrap().growth(), Growth::Quadratic);
        assert_eq!(YoungFunction::normalized_power(3.0).unwrap().growth(), Growth::SuperQuadratic);
        assert_eq!(YoungFunction::<f64>::identity().growth(), Growth::SubQuadratic);
    }
}
