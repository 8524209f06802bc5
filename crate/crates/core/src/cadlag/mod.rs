//! Càdlàg step paths on a finite horizon.
//!
//! A [`CadlagPath`] is an initial value, a finite list of jumps and an
//! optional piecewise-constant sample of a continuous component. Beyond the
//! horizon the path is extended by its terminal value, which embeds
//! `[0, T]` paths into `D([0, ∞); R^ℓ)`.

mod csv;
mod joint;
mod jumps;
mod metric;

use thiserror::Error;

use crate::scalar::Real;

pub use self::csv::{read_csv, write_csv};
pub use self::joint::{joint_j1_check, JointReport, JointVerdict};
pub use self::jumps::{jump_functional, jump_functional_joint, jump_time, r_p, Interval, JumpWindow};
pub use self::metric::{
    j1_distance, j1_distance_detailed, j1_distance_with_tolerance, lu_distance, uniform_distance, J1Distance,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("path dimension must be positive")]
    ZeroDimension,
    #[error("jump times must be strictly increasing within (0, T]; offending time {0}")]
    BadJumpTime(f64),
    #[error("sample grid must start at 0, increase strictly and stay within [0, T]")]
    BadSampleGrid,
    #[error("jump window: {0}")]
    BadWindow(String),
    #[error("exponent p must be positive, got {0}")]
    NonPositiveExponent(f64),
    #[error("no sequences supplied")]
    EmptyInput,
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jump<T> {
    pub time: T,
    pub delta: Vec<T>,
}

/// Piecewise-constant samples of a continuous component, relative to the
/// initial value (the sample at time 0 is always zero).
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSamples<T> {
    pub times: Vec<T>,
    pub values: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CadlagPath<T> {
    dim: usize,
    horizon: T,
    initial: Vec<T>,
    jumps: Vec<Jump<T>>,
    drift: Option<DriftSamples<T>>,
}

/// Breakpoint form used by the metrics: every time at which the value
/// changes, together with the value from that time on.
#[derive(Debug, Clone)]
pub(crate) struct StepForm<T> {
    pub dim: usize,
    pub times: Vec<T>,
    /// `(times.len() + 1) * dim` values; block `i` is the value after `i` breakpoints.
    pub values: Vec<T>,
}

impl<T: Real> StepForm<T> {
    #[inline]
    pub fn value(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Number of breakpoints at or before `horizon`.
    pub fn count_until(&self, horizon: T) -> usize {
        self.times.partition_point(|&t| t <= horizon)
    }
}

pub(crate) fn norm<T: Real>(a: &[T], b: &[T]) -> T {
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

impl<T: Real> CadlagPath<T> {
    /// Constant path.
    pub fn constant(horizon: T, initial: Vec<T>) -> Result<Self, PathError> {
        Self::step(horizon, initial, Vec::new())
    }

    /// Pure step path. Jumps must have strictly increasing times in `(0, T]`;
    /// zero jump vectors are dropped.
    pub fn step(horizon: T, initial: Vec<T>, jumps: Vec<(T, Vec<T>)>) -> Result<Self, PathError> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(PathError::BadHorizon(horizon.to_f64_lossy()));
        }
        let dim = initial.len();
        if dim == 0 {
            return Err(PathError::ZeroDimension);
        }
        let mut out = Vec::with_capacity(jumps.len());
        let mut last = T::zero();
        for (time, delta) in jumps {
            if delta.len() != dim {
                return Err(PathError::DimensionMismatch { left: dim, right: delta.len() });
            }
            if !(time > last) || time > horizon {
                return Err(PathError::BadJumpTime(time.to_f64_lossy()));
            }
            last = time;
            if delta.iter().all(|d| d.is_zero()) {
                continue;
            }
            out.push(Jump { time, delta });
        }
        Ok(Self { dim, horizon, initial, jumps: out, drift: None })
    }

    /// One-dimensional step path from `(time, jump)` pairs.
    pub fn scalar_step(horizon: T, initial: T, jumps: &[(T, T)]) -> Result<Self, PathError> {
        Self::step(horizon, vec![initial], jumps.iter().map(|&(t, d)| (t, vec![d])).collect())
    }

    /// Attach a sampled continuous component. `times[0]` must be 0; the
    /// sample at 0 is folded into the initial value.
    pub fn with_samples(mut self, times: Vec<T>, mut values: Vec<Vec<T>>) -> Result<Self, PathError> {
        if times.is_empty()
            || times.len() != values.len()
            || !times[0].is_zero()
            || times.windows(2).any(|w| !(w[1] > w[0]))
            || *times.last().unwrap() > self.horizon
        {
            return Err(PathError::BadSampleGrid);
        }
        if let Some(v) = values.iter().find(|v| v.len() != self.dim) {
            return Err(PathError::DimensionMismatch { left: self.dim, right: v.len() });
        }
        let base = values[0].clone();
        for v in values.iter_mut() {
            for (x, b) in v.iter_mut().zip(&base) {
                *x = *x - *b;
            }
        }
        for (x, b) in self.initial.iter_mut().zip(&base) {
            *x = *x + *b;
        }
        self.drift = Some(DriftSamples { times, values });
        Ok(self)
    }

    /// Path sampled on a grid: piecewise constant, continuous part only.
    pub fn sampled(horizon: T, times: Vec<T>, values: Vec<Vec<T>>) -> Result<Self, PathError> {
        let dim = values.first().map(Vec::len).ok_or(PathError::BadSampleGrid)?;
        Self::constant(horizon, vec![T::zero(); dim])?.with_samples(times, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn initial(&self) -> &[T] {
        &self.initial
    }

    pub fn jumps(&self) -> &[Jump<T>] {
        &self.jumps
    }

    pub fn samples(&self) -> Option<&DriftSamples<T>> {
        self.drift.as_ref()
    }

    pub fn is_pure_step(&self) -> bool {
        self.drift.is_none()
    }

    /// Largest spacing of the sample grid, when a continuous part is present.
    pub fn grid_resolution(&self) -> Option<T> {
        let d = self.drift.as_ref()?;
        let mut res = self.horizon - *d.times.last().unwrap();
        for w in d.times.windows(2) {
            res = res.max(w[1] - w[0]);
        }
        Some(res)
    }

    /// `α_t`. Right-continuous; constant after the horizon.
    pub fn evaluate(&self, t: T) -> Vec<T> {
        let t = t.min(self.horizon);
        let mut v = self.initial.clone();
        if let Some(d) = &self.drift {
            let idx = d.times.partition_point(|&s| s <= t);
            if idx > 0 {
                for (x, y) in v.iter_mut().zip(&d.values[idx - 1]) {
                    *x = *x + *y;
                }
            }
        }
        for j in self.jumps.iter().take_while(|j| j.time <= t) {
            for (x, y) in v.iter_mut().zip(&j.delta) {
                *x = *x + *y;
            }
        }
        v
    }

    /// Values at a nondecreasing sequence of times, in one sweep.
    pub fn values_at_sorted(&self, times: &[T]) -> Vec<Vec<T>> {
        let mut out = Vec::with_capacity(times.len());
        let mut acc = self.initial.clone();
        let mut next_jump = 0;
        let mut drift_idx = 0;
        let zero = vec![T::zero(); self.dim];
        for &t in times {
            let t = t.min(self.horizon);
            while next_jump < self.jumps.len() && self.jumps[next_jump].time <= t {
                for (x, y) in acc.iter_mut().zip(&self.jumps[next_jump].delta) {
                    *x = *x + *y;
                }
                next_jump += 1;
            }
            let drift = match &self.drift {
                Some(d) => {
                    while drift_idx < d.times.len() && d.times[drift_idx] <= t {
                        drift_idx += 1;
                    }
                    if drift_idx > 0 {
                        &d.values[drift_idx - 1]
                    } else {
                        &zero
                    }
                }
                None => &zero,
            };
            out.push(acc.iter().zip(drift).map(|(&a, &b)| a + b).collect());
        }
        out
    }

    /// All times at which the path may change: jump times and sample times.
    pub(crate) fn change_times(&self) -> Vec<T> {
        let mut times: Vec<T> = self.jumps.iter().map(|j| j.time).collect();
        if let Some(d) = &self.drift {
            times.extend(d.times.iter().copied().filter(|t| !t.is_zero()));
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            times.dedup();
        }
        times
    }

    pub fn terminal(&self) -> Vec<T> {
        self.evaluate(self.horizon)
    }

    /// Left limit `α_{t-}`.
    pub fn left_limit(&self, t: T) -> Vec<T> {
        let form = self.step_form();
        let idx = form.times.partition_point(|&s| s < t);
        form.value(idx).to_vec()
    }

    /// Coordinate `i` as a one-dimensional path.
    pub fn coordinate(&self, i: usize) -> CadlagPath<T> {
        self.map_coordinates(1, |v| vec![v[i]])
    }

    /// Apply a linear-in-increments map to every value. The map must send
    /// zero to zero when applied to increments, e.g. a projection.
    pub(crate) fn map_coordinates(&self, dim: usize, f: impl Fn(&[T]) -> Vec<T>) -> CadlagPath<T> {
        CadlagPath {
            dim,
            horizon: self.horizon,
            initial: f(&self.initial),
            jumps: self
                .jumps
                .iter()
                .map(|j| Jump { time: j.time, delta: f(&j.delta) })
                .filter(|j| j.delta.iter().any(|d| !d.is_zero()))
                .collect(),
            drift: self
                .drift
                .as_ref()
                .map(|d| DriftSamples { times: d.times.clone(), values: d.values.iter().map(|v| f(v)).collect() }),
        }
    }

    /// Stack paths coordinate-wise into one path of summed dimension.
    pub fn stack(parts: &[&CadlagPath<T>]) -> Result<CadlagPath<T>, PathError> {
        let first = parts.first().ok_or(PathError::EmptyInput)?;
        let horizon = parts.iter().map(|p| p.horizon).fold(first.horizon, T::max);
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut times: Vec<T> = parts.iter().flat_map(|p| p.change_times()).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let initial: Vec<T> = parts.iter().flat_map(|p| p.initial.clone()).collect();
        let columns: Vec<Vec<Vec<T>>> = parts.iter().map(|p| p.values_at_sorted(&times)).collect();
        let values: Vec<Vec<T>> =
            (0..times.len()).map(|i| columns.iter().flat_map(|c| c[i].iter().copied()).collect()).collect();
        CadlagPath::from_breakpoints(horizon, dim, initial, times, values)
    }

    /// Pure step path from breakpoint times and the values taken from them on.
    pub fn from_breakpoints(
        horizon: T,
        dim: usize,
        initial: Vec<T>,
        times: Vec<T>,
        values: Vec<Vec<T>>,
    ) -> Result<CadlagPath<T>, PathError> {
        let mut prev = initial.clone();
        let mut jumps = Vec::with_capacity(times.len());
        for (t, v) in times.into_iter().zip(values) {
            if v.len() != dim {
                return Err(PathError::DimensionMismatch { left: dim, right: v.len() });
            }
            let delta: Vec<T> = v.iter().zip(&prev).map(|(&a, &b)| a - b).collect();
            prev = v;
            jumps.push((t, delta));
        }
        CadlagPath::step(horizon, initial, jumps)
    }

    /// Pointwise sum of paths of equal dimension.
    pub fn add(&self, other: &CadlagPath<T>) -> Result<CadlagPath<T>, PathError> {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &CadlagPath<T>) -> Result<CadlagPath<T>, PathError> {
        self.combine(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> CadlagPath<T> {
        self.map_coordinates(self.dim, |v| v.iter().map(|&x| c * x).collect())
    }

    fn combine(&self, other: &CadlagPath<T>, op: impl Fn(T, T) -> T) -> Result<CadlagPath<T>, PathError> {
        if self.dim != other.dim {
            return Err(PathError::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let horizon = self.horizon.max(other.horizon);
        let initial: Vec<T> = self.initial.iter().zip(&other.initial).map(|(&a, &b)| op(a, b)).collect();
        let mut jump_times: Vec<T> = self.jumps.iter().chain(&other.jumps).map(|j| j.time).collect();
        jump_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        jump_times.dedup();
        let left = |p: &CadlagPath<T>, t: &[T]| -> Vec<Vec<T>> {
            // value just before each jump time: evaluate on the breakpoint
            // immediately preceding it
            let form = p.step_form();
            t.iter().map(|&s| form.value(form.times.partition_point(|&u| u < s)).to_vec()).collect()
        };
        let (a_now, b_now) = (self.values_at_sorted(&jump_times), other.values_at_sorted(&jump_times));
        let (a_before, b_before) = (left(self, &jump_times), left(other, &jump_times));
        let mut jumps = Vec::with_capacity(jump_times.len());
        for (i, &t) in jump_times.iter().enumerate() {
            let delta =
                (0..self.dim).map(|c| op(a_now[i][c], b_now[i][c]) - op(a_before[i][c], b_before[i][c])).collect();
            jumps.push((t, delta));
        }
        let base = CadlagPath::step(horizon, initial, jumps)?;
        if self.is_pure_step() && other.is_pure_step() {
            return Ok(base);
        }
        let mut times = self.change_times();
        times.extend(other.change_times());
        times.push(T::zero());
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let (a, b, j) = (self.values_at_sorted(&times), other.values_at_sorted(&times), base.values_at_sorted(&times));
        let values: Vec<Vec<T>> =
            (0..times.len()).map(|i| (0..self.dim).map(|c| op(a[i][c], b[i][c]) - j[i][c]).collect()).collect();
        base.with_samples(times, values)
    }

    pub(crate) fn step_form(&self) -> StepForm<T> {
        let dim = self.dim;
        let times = self.change_times();
        let at = self.values_at_sorted(&times);
        let mut values = Vec::with_capacity((times.len() + 1) * dim);
        values.extend_from_slice(&self.initial);
        let mut kept = Vec::with_capacity(times.len());
        for (t, v) in times.into_iter().zip(at) {
            let prev = &values[values.len() - dim..];
            if v.iter().zip(prev).all(|(a, b)| a == b) {
                continue;
            }
            values.extend(v);
            kept.push(t);
        }
        StepForm { dim, times: kept, values }
    }
}
