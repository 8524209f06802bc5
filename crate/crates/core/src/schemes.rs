//! Approximation schemes: level-`k` lattices for a scaled Brownian motion
//! plus an optional compound Poisson part, terminal payoffs, and a sampler
//! that puts every level and the continuous-time limit on one probability
//! space.
//!
//! Coupling. Each seed fixes one limit path: a Brownian motion on a dyadic
//! grid of `FINE_STEPS` cells and a compound Poisson path. The diffusive
//! moves of every level are read off that Brownian path by dyadic quantile
//! coupling: the number of up-moves of the underlying simple random walk is
//! the binomial quantile of `Φ(W_T/√T)`, and each block's split between its
//! halves is the hypergeometric quantile of the normalized Brownian-bridge
//! midpoint of that block. A trinomial step is two walk steps. Jumps: a step
//! carries a jump when the limit path jumps inside it, otherwise with the
//! small auxiliary probability that tops the jump probability up to exactly
//! `λT/k`; the mark is the first limit mark in the step.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

use crate::cadlag::{CadlagPath, PathError};
use crate::lattice::{
    pii_lattice, AdaptedProcess, LatticeBasis, LatticeError, LatticePath, LatticeSample, Outcome, StepLaw,
};
use crate::rng::stream_rng;

/// Cells of the dyadic grid carrying the limit Brownian path.
pub const FINE_STEPS: usize = 4096;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("invalid scheme: {0}")]
    Invalid(String),
    #[error("unknown payoff {0:?}")]
    UnknownPayoff(String),
    #[error("level {k}: jump probability per step {rate} exceeds 1/2")]
    Intensity { k: usize, rate: f64 },
    #[error("level {k}: coupled sampling needs a power-of-two walk with at most {FINE_STEPS} steps")]
    NotDyadic { k: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Path(#[from] PathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    TrinomialBm,
    BinomialBm,
    ThinnedCompoundPoisson,
    LevyMixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mark {
    pub value: f64,
    pub prob: f64,
}

/// Terminal payoff `ξ = f(X_T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Payoff {
    Linear,
    Square,
    IndicatorAbove { barrier: f64 },
    Call { strike: f64 },
    Constant { value: f64 },
}

impl Payoff {
    pub fn from_name(name: &str, param: Option<f64>) -> Result<Self, SchemeError> {
        let p = param.unwrap_or(0.0);
        Ok(match name {
            "linear" => Payoff::Linear,
            "square" => Payoff::Square,
            "indicator_above" => Payoff::IndicatorAbove { barrier: p },
            "call" => Payoff::Call { strike: p },
            "constant" => Payoff::Constant { value: p },
            _ => return Err(SchemeError::UnknownPayoff(name.to_string())),
        })
    }

    /// One payoff of every kind.
    pub fn library() -> Vec<Payoff> {
        vec![
            Payoff::Linear,
            Payoff::Square,
            Payoff::IndicatorAbove { barrier: 0.0 },
            Payoff::Call { strike: 0.25 },
            Payoff::Constant { value: 1.5 },
        ]
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Payoff::Linear => x,
            Payoff::Square => x * x,
            Payoff::IndicatorAbove { barrier } => f64::from(u8::from(x > barrier)),
            Payoff::Call { strike } => (x - strike).max(0.0),
            Payoff::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub horizon: f64,
    pub levels: Vec<usize>,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub intensity: f64,
    #[serde(default)]
    pub marks: Vec<Mark>,
    pub payoff: Payoff,
}

fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Smallest `v` in `lo..=hi` whose cumulative probability reaches `u`.
fn quantile(lo: u64, hi: u64, ln_pmf: impl Fn(u64) -> f64, u: f64) -> u64 {
    let mut acc = 0.0;
    for v in lo..=hi {
        acc += ln_pmf(v).exp();
        if acc >= u {
            return v;
        }
    }
    hi
}

impl SchemeSpec {
    pub fn validate(&self) -> Result<(), SchemeError> {
        let bad = |m: &str| Err(SchemeError::Invalid(m.to_string()));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if self.levels.is_empty() || self.levels[0] == 0 || self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return bad("levels must be positive and strictly increasing");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite() && self.intensity >= 0.0 && self.intensity.is_finite()) {
            return bad("sigma and intensity must be finite and nonnegative");
        }
        let (diffusive, jumps) = (self.sigma > 0.0, self.intensity > 0.0);
        let ok = match self.kind {
            SchemeKind::TrinomialBm | SchemeKind::BinomialBm => diffusive && !jumps,
            SchemeKind::ThinnedCompoundPoisson => jumps && !diffusive,
            SchemeKind::LevyMixed => diffusive && jumps,
        };
        if !ok {
            return bad("sigma/intensity do not match the scheme kind");
        }
        if jumps {
            if self.marks.is_empty() {
                return bad("jump part needs at least one mark");
            }
            let total: f64 = self.marks.iter().map(|m| m.prob).sum();
            if self.marks.iter().any(|m| !(m.prob > 0.0) || m.value == 0.0 || !m.value.is_finite())
                || (total - 1.0).abs() > 1e-12
            {
                return bad("marks need nonzero values and positive probabilities summing to 1");
            }
            let mut values: Vec<f64> = self.marks.iter().map(|m| m.value).collect();
            values.sort_by(f64::total_cmp);
            if values.windows(2).any(|w| w[0] == w[1]) {
                return bad("mark values must be distinct");
            }
            for &k in &self.levels {
                let rate = self.intensity * self.horizon / k as f64;
                if rate > 0.5 {
                    return Err(SchemeError::Intensity { k, rate });
                }
            }
        }
        Ok(())
    }

    pub fn has_diffusion(&self) -> bool {
        self.sigma > 0.0
    }

    pub fn has_jumps(&self) -> bool {
        self.intensity > 0.0
    }

    /// `E[mark^p]`.
    pub fn mark_moment(&self, p: i32) -> f64 {
        self.marks.iter().map(|m| m.prob * m.value.powi(p)).sum()
    }

    /// Walk steps behind one lattice step.
    fn walk_factor(&self) -> usize {
        match self.kind {
            SchemeKind::BinomialBm => 1,
            _ => 2,
        }
    }

    fn diffusive_law(&self, k: usize) -> StepLaw<f64> {
        let dt = self.horizon / k as f64;
        match self.kind {
            SchemeKind::BinomialBm => {
                let h = self.sigma * dt.sqrt();
                StepLaw::new(vec![
                    Outcome::new(0.5, vec![-1], vec![-h], vec![0.0]),
                    Outcome::new(0.5, vec![1], vec![h], vec![0.0]),
                ])
            }
            _ => {
                let h = self.sigma * (2.0 * dt).sqrt();
                StepLaw::new(vec![
                    Outcome::new(0.25, vec![-1], vec![-h], vec![0.0]),
                    Outcome::new(0.5, vec![0], vec![0.0], vec![0.0]),
                    Outcome::new(0.25, vec![1], vec![h], vec![0.0]),
                ])
            }
        }
    }

    /// Recombination key of each mark: a multiple of a common unit when the
    /// marks are commensurate, otherwise a per-mark counter.
    fn mark_keys(&self) -> Vec<Vec<i64>> {
        let unit = self.marks.iter().map(|m| m.value.abs()).fold(f64::INFINITY, f64::min);
        let multiples: Vec<f64> = self.marks.iter().map(|m| m.value / unit).collect();
        if multiples.iter().all(|r| (r - r.round()).abs() < 1e-9 && r.abs() <= 1000.0) {
            return multiples.iter().map(|r| vec![r.round() as i64]).collect();
        }
        let n = self.marks.len();
        (0..n).map(|i| (0..n).map(|j| i64::from(i == j)).collect()).collect()
    }

    fn jump_law(&self, k: usize) -> StepLaw<f64> {
        let rate = self.intensity * self.horizon / k as f64;
        let keys = self.mark_keys();
        let mut outcomes = vec![Outcome::new(1.0 - rate, vec![0; keys[0].len()], vec![0.0], vec![0.0])];
        for (m, key) in self.marks.iter().zip(keys) {
            outcomes.push(Outcome::new(rate * m.prob, key, vec![0.0], vec![m.value]));
        }
        StepLaw::new(outcomes)
    }

    pub fn step_law(&self, k: usize) -> StepLaw<f64> {
        match self.kind {
            SchemeKind::TrinomialBm | SchemeKind::BinomialBm => self.diffusive_law(k),
            SchemeKind::ThinnedCompoundPoisson => self.jump_law(k),
            SchemeKind::LevyMixed => self.diffusive_law(k).product(&self.jump_law(k)),
        }
    }

    pub fn times(&self, k: usize) -> Vec<f64> {
        (0..=k).map(|j| self.horizon * j as f64 / k as f64).collect()
    }

    /// Level-`k` lattice with `t_j = jT/k`.
    pub fn build_level(&self, k: usize) -> Result<LatticeBasis<f64>, SchemeError> {
        self.validate()?;
        if k == 0 {
            return Err(SchemeError::Invalid("k must be positive".into()));
        }
        if self.has_jumps() && self.intensity * self.horizon / k as f64 > 0.5 {
            return Err(SchemeError::Intensity { k, rate: self.intensity * self.horizon / k as f64 });
        }
        Ok(pii_lattice(self.times(k), 1, &vec![self.step_law(k); k])?)
    }

    /// `X_T = X∘_T + (sum of marks) − λ E[mark] T` at a terminal node.
    pub fn terminal_state(&self, circ: f64, marks: f64) -> f64 {
        circ + marks - self.intensity * self.mark_moment(1) * self.horizon
    }

    /// `Y_t = E[ξ | G_t]` on a level lattice.
    pub fn value_process(&self, basis: &LatticeBasis<f64>) -> Result<AdaptedProcess<f64>, SchemeError> {
        let terminal = basis
            .layer(basis.steps())
            .iter()
            .map(|n| self.payoff.eval(self.terminal_state(n.circ[0], n.marks[0])))
            .collect();
        Ok(basis.martingale_from_terminal(terminal)?)
    }

    /// Closed form of `E[ξ | X_t = x]` in the limit, where available.
    pub fn closed_form(&self) -> Option<ClosedForm> {
        let available = match self.payoff {
            Payoff::Linear | Payoff::Square | Payoff::Constant { .. } => true,
            Payoff::IndicatorAbove { .. } | Payoff::Call { .. } => !self.has_jumps(),
        };
        available.then(|| ClosedForm {
            payoff: self.payoff,
            horizon: self.horizon,
            sigma: self.sigma,
            intensity: self.intensity,
            marks: self.marks.clone(),
        })
    }

    fn check_dyadic(&self, k: usize) -> Result<usize, SchemeError> {
        let m = k * self.walk_factor();
        if self.has_diffusion() && (!m.is_power_of_two() || m > FINE_STEPS) {
            return Err(SchemeError::NotDyadic { k });
        }
        Ok(m)
    }

    /// Coupled discrete path at level `k` on `basis` (as built by
    /// [`build_level`](Self::build_level)) and the limit path for `seed`.
    pub fn sample_coupled(&self, basis: &LatticeBasis<f64>, seed: u64) -> Result<CoupledSample, SchemeError> {
        let limit = LimitSample::draw(self, seed);
        self.couple(basis, &limit, seed)
    }

    /// Discrete path at the level of `basis` coupled to a given limit path.
    pub fn couple(
        &self,
        basis: &LatticeBasis<f64>,
        limit: &LimitSample,
        seed: u64,
    ) -> Result<CoupledSample, SchemeError> {
        let k = basis.steps();
        let m = self.check_dyadic(k)?;
        let diffusive: Vec<usize> = if self.has_diffusion() {
            let ups = walk_ups(&limit.w, m, self.horizon);
            let f = self.walk_factor();
            (0..k).map(|j| ups[j * f..(j + 1) * f].iter().map(|&u| usize::from(u)).sum()).collect()
        } else {
            vec![0; k]
        };
        let mut report = JumpCoupling::default();
        let jumps: Vec<usize> =
            if self.has_jumps() { self.couple_jumps(k, limit, seed, &mut report) } else { vec![0; k] };
        let per_jump = if self.has_jumps() { self.marks.len() + 1 } else { 1 };
        let moves: Vec<usize> = diffusive.iter().zip(&jumps).map(|(d, j)| d * per_jump + j).collect();
        let path = basis.path_from_moves(&moves)?;
        let discrete = basis.embed(path)?;
        Ok(CoupledSample { discrete, limit: limit.paths(self)?, jumps: report })
    }

    fn couple_jumps(&self, k: usize, limit: &LimitSample, seed: u64, report: &mut JumpCoupling) -> Vec<usize> {
        let dt = self.horizon / k as f64;
        let rate = self.intensity * dt;
        let stay = (-rate).exp();
        let top_up = (rate - (1.0 - stay)) / stay;
        let mut aux = stream_rng(seed, &[1, k as u64]);
        let mut cursor = 0;
        let mut out = Vec::with_capacity(k);
        for j in 0..k {
            let end = if j + 1 == k { self.horizon } else { self.horizon * (j + 1) as f64 / k as f64 };
            let first = cursor;
            while cursor < limit.jumps.len() && limit.jumps[cursor].0 <= end {
                cursor += 1;
            }
            let (u, v): (f64, f64) = (aux.random(), aux.random());
            let hits = cursor - first;
            if hits >= 2 {
                report.collisions += 1;
            }
            if hits >= 1 {
                let (time, mark) = limit.jumps[first];
                let idx = self.marks.iter().position(|m| m.value == mark).expect("limit marks come from the mark set");
                report.matched.push((end, time));
                out.push(idx + 1);
            } else if u < top_up {
                report.spurious += 1;
                out.push(self.mark_index(v) + 1);
            } else {
                out.push(0);
            }
        }
        out
    }

    fn mark_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, m) in self.marks.iter().enumerate() {
            acc += m.prob;
            if u < acc {
                return i;
            }
        }
        self.marks.len() - 1
    }
}

/// Up-moves (0 or 1) of an `m`-step simple random walk coupled to the
/// Brownian path `w` sampled on `FINE_STEPS` cells of `[0, horizon]`.
fn walk_ups(w: &[f64], m: usize, horizon: f64) -> Vec<u8> {
    let stride = FINE_STEPS / m;
    let top = phi(w[FINE_STEPS] / horizon.sqrt());
    let total = quantile(0, m as u64, |v| ln_binomial(m as u64, v) - m as f64 * std::f64::consts::LN_2, top);
    let mut ups = vec![0u8; m];
    let mut stack = vec![(0usize, m, total)];
    while let Some((a, b, u)) = stack.pop() {
        let n = b - a;
        if n == 1 {
            ups[a] = u as u8;
            continue;
        }
        let c = (a + b) / 2;
        let half = (c - a) as u64;
        let dev = w[c * stride] - 0.5 * (w[a * stride] + w[b * stride]);
        let sd = (n as f64 * horizon / m as f64 / 4.0).sqrt();
        let uni = phi(dev / sd);
        let n64 = n as u64;
        let lo = u.saturating_sub(n64 - half);
        let hi = u.min(half);
        let left =
            quantile(lo, hi, |v| ln_binomial(u, v) + ln_binomial(n64 - u, half - v) - ln_binomial(n64, half), uni);
        stack.push((a, c, left));
        stack.push((c, b, u - left));
    }
    ups
}

/// Jump-matching record of one coupled sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JumpCoupling {
    /// `(discrete jump time, limit jump time)` for steps hosting a limit jump.
    pub matched: Vec<(f64, f64)>,
    /// Steps hosting two or more limit jumps.
    pub collisions: usize,
    /// Discrete jumps without a limit jump in their step.
    pub spurious: usize,
}

impl JumpCoupling {
    pub fn clean(&self) -> bool {
        self.collisions == 0 && self.spurious == 0
    }

    pub fn max_time_gap(&self) -> f64 {
        self.matched.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `X`, `X∘` and the compensated `X♮` as paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTriple {
    pub x: CadlagPath<f64>,
    pub circ: CadlagPath<f64>,
    pub nat: CadlagPath<f64>,
}

#[derive(Debug, Clone)]
pub struct CoupledSample {
    pub discrete: LatticeSample,
    pub limit: PathTriple,
    pub jumps: JumpCoupling,
}

impl CoupledSample {
    pub fn path(&self) -> &LatticePath {
        &self.discrete.path
    }
}

/// One draw of the limit process.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSample {
    pub horizon: f64,
    /// Standard Brownian motion at `iT/FINE_STEPS`.
    pub w: Vec<f64>,
    /// `(time, mark)` of the compound Poisson part.
    pub jumps: Vec<(f64, f64)>,
}

impl LimitSample {
    pub fn draw(spec: &SchemeSpec, seed: u64) -> Self {
        let mut w = vec![0.0; FINE_STEPS + 1];
        if spec.has_diffusion() {
            let mut rng = stream_rng(seed, &[0]);
            let sd = (spec.horizon / FINE_STEPS as f64).sqrt();
            for i in 0..FINE_STEPS {
                let z: f64 = StandardNormal.sample(&mut rng);
                w[i + 1] = w[i] + sd * z;
            }
        }
        let mut jumps = Vec::new();
        if spec.has_jumps() {
            let mut rng = stream_rng(seed, &[2]);
            let exp = Exp::new(spec.intensity).expect("positive intensity");
            let mut t = 0.0;
            loop {
                t += exp.sample(&mut rng);
                if t > spec.horizon {
                    break;
                }
                let u: f64 = rng.random();
                jumps.push((t, spec.marks[spec.mark_index(u)].value));
            }
        }
        Self { horizon: spec.horizon, w, jumps }
    }

    pub fn fine_times(&self) -> Vec<f64> {
        (0..=FINE_STEPS).map(|i| self.horizon * i as f64 / FINE_STEPS as f64).collect()
    }

    fn fine_index(&self, t: f64) -> usize {
        ((t / self.horizon * FINE_STEPS as f64).floor() as usize).min(FINE_STEPS)
    }

    /// Continuous part `σW_t − λE[mark]t` at fine index `i`.
    fn continuous(&self, spec: &SchemeSpec, i: usize) -> f64 {
        let t = self.horizon * i as f64 / FINE_STEPS as f64;
        spec.sigma * self.w[i] - spec.intensity * spec.mark_moment(1) * t
    }

    /// `X_t` with the continuous part read at the last fine point `≤ t`.
    pub fn x_at(&self, spec: &SchemeSpec, t: f64) -> f64 {
        let jumps: f64 = self.jumps.iter().take_while(|(s, _)| *s <= t).map(|(_, m)| m).sum();
        self.continuous(spec, self.fine_index(t)) + jumps
    }

    /// `X_t` at each fine time.
    pub fn x_fine(&self, spec: &SchemeSpec) -> Vec<f64> {
        let mut out = Vec::with_capacity(FINE_STEPS + 1);
        let mut acc = 0.0;
        let mut cursor = 0;
        for (i, t) in self.fine_times().into_iter().enumerate() {
            while cursor < self.jumps.len() && self.jumps[cursor].0 <= t {
                acc += self.jumps[cursor].1;
                cursor += 1;
            }
            out.push(self.continuous(spec, i) + acc);
        }
        out
    }

    /// Path of `g(t, X_t)`: fine-grid samples between jumps, exact jump
    /// sizes `g(τ, X_τ) − g(τ, X_τ−)` at the jump times.
    pub fn functional(&self, spec: &SchemeSpec, g: impl Fn(f64, f64) -> f64) -> Result<CadlagPath<f64>, PathError> {
        self.functional_on(spec, FINE_STEPS, g)
    }

    /// As [`functional`](Self::functional) with samples on `cells` equal
    /// cells, a power of two not above `FINE_STEPS`.
    pub fn functional_on(
        &self,
        spec: &SchemeSpec,
        cells: usize,
        g: impl Fn(f64, f64) -> f64,
    ) -> Result<CadlagPath<f64>, PathError> {
        if !cells.is_power_of_two() || cells > FINE_STEPS {
            return Err(PathError::BadSampleGrid);
        }
        let stride = FINE_STEPS / cells;
        let fine = self.fine_times();
        let xs = self.x_fine(spec);
        let mut jumps = Vec::with_capacity(self.jumps.len());
        let mut before = 0.0;
        for &(t, m) in &self.jumps {
            let i = self.fine_index(t) / stride * stride;
            let left = self.continuous(spec, i) + before;
            jumps.push((t, vec![g(t, left + m) - g(t, left)]));
            before += m;
        }
        let mut cum = 0.0;
        let mut cursor = 0;
        let mut times = Vec::with_capacity(cells + 1);
        let mut values = Vec::with_capacity(cells + 1);
        for i in (0..=FINE_STEPS).step_by(stride) {
            let t = fine[i];
            while cursor < jumps.len() && jumps[cursor].0 <= t {
                cum += jumps[cursor].1[0];
                cursor += 1;
            }
            times.push(t);
            values.push(vec![g(t, xs[i]) - cum]);
        }
        CadlagPath::step(self.horizon, vec![0.0], jumps)?.with_samples(times, values)
    }

    pub fn paths(&self, spec: &SchemeSpec) -> Result<PathTriple, PathError> {
        let times = self.fine_times();
        let circ_values: Vec<Vec<f64>> = self.w.iter().map(|w| vec![spec.sigma * w]).collect();
        let circ = CadlagPath::sampled(self.horizon, times.clone(), circ_values)?;
        let drift = spec.intensity * spec.mark_moment(1);
        let marks = self.jumps.iter().map(|&(t, m)| (t, vec![m])).collect();
        let mut nat = CadlagPath::step(self.horizon, vec![0.0], marks)?;
        if drift != 0.0 {
            nat = nat.with_samples(times, self.fine_times().iter().map(|t| vec![-drift * t]).collect())?;
        }
        Ok(PathTriple { x: self.functional(spec, |_, x| x)?, circ, nat })
    }
}

/// `g(t, x) = E[ξ | X_t = x]` for the limit process, with the bracket
/// densities of `Y_t = g(t, X_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    payoff: Payoff,
    horizon: f64,
    sigma: f64,
    intensity: f64,
    marks: Vec<Mark>,
}

/// Densities in `t` of `⟨Y⟩`, `⟨Y, X∘⟩` and `⟨Y, X♮⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketRates {
    pub yy: f64,
    pub y_circ: f64,
    pub y_nat: f64,
}

impl ClosedForm {
    fn spread(&self, t: f64) -> f64 {
        self.sigma * (self.horizon - t).max(0.0).sqrt()
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        let s = self.spread(t);
        match self.payoff {
            Payoff::Linear => x,
            Payoff::Constant { value } => value,
            Payoff::Square => {
                let v = self.sigma * self.sigma
                    + self.intensity * self.marks.iter().map(|m| m.prob * m.value * m.value).sum::<f64>();
                x * x + v * (self.horizon - t)
            }
            Payoff::IndicatorAbove { barrier } if s > 0.0 => phi((x - barrier) / s),
            Payoff::Call { strike } if s > 0.0 => {
                let d = (x - strike) / s;
                (x - strike) * phi(d) + s * density(d)
            }
            p => p.eval(x),
        }
    }

    /// `∂g/∂x`.
    pub fn dx(&self, t: f64, x: f64) -> f64 {
        let s = self.spread(t);
        match self.payoff {
            Payoff::Linear => 1.0,
            Payoff::Constant { .. } => 0.0,
            Payoff::Square => 2.0 * x,
            Payoff::IndicatorAbove { barrier } if s > 0.0 => density((x - barrier) / s) / s,
            Payoff::Call { strike } if s > 0.0 => phi((x - strike) / s),
            Payoff::Call { strike } => f64::from(u8::from(x > strike)),
            Payoff::IndicatorAbove { .. } => 0.0,
        }
    }

    pub fn rates(&self, t: f64, x: f64) -> BracketRates {
        let z = self.dx(t, x);
        let s2 = self.sigma * self.sigma;
        let g = self.value(t, x);
        let (mut jj, mut jn) = (0.0, 0.0);
        for m in &self.marks {
            let d = self.value(t, x + m.value) - g;
            jj += m.prob * d * d;
            jn += m.prob * m.value * d;
        }
        BracketRates { yy: s2 * z * z + self.intensity * jj, y_circ: s2 * z, y_nat: self.intensity * jn }
    }
}

/// A lattice on which a jump always comes with an up-move of `X∘`, so
/// `E[ΔX∘ 1_{mark=1} | state] ≠ 0`. Negative control for (M2′).
pub fn m2prime_violating(k: usize, horizon: f64) -> Result<LatticeBasis<f64>, SchemeError> {
    if k == 0 {
        return Err(SchemeError::Invalid("k must be positive".into()));
    }
    let h = (horizon / k as f64).sqrt();
    let law = StepLaw::new(vec![
        Outcome::new(0.25, vec![3, 1], vec![h], vec![1.0]),
        Outcome::new(0.75, vec![-1, 0], vec![-h / 3.0], vec![0.0]),
    ]);
    let times = (0..=k).map(|j| horizon * j as f64 / k as f64).collect();
    Ok(pii_lattice(times, 1, &vec![law; k])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brackets::predictable_variation;
    use crate::cadlag::uniform_distance;
    use crate::gkw::validate_m2prime;

    fn trinomial(levels: Vec<usize>, payoff: Payoff) -> SchemeSpec {
        SchemeSpec {
            kind: SchemeKind::TrinomialBm,
            horizon: 1.0,
            levels,
            sigma: 1.0,
            intensity: 0.0,
            marks: vec![],
            payoff,
        }
    }

    fn cp(levels: Vec<usize>, intensity: f64, marks: Vec<Mark>) -> SchemeSpec {
        SchemeSpec {
            kind: SchemeKind::ThinnedCompoundPoisson,
            horizon: 1.0,
            levels,
            sigma: 0.0,
            intensity,
            marks,
            payoff: Payoff::Linear,
        }
    }

    fn mixed() -> SchemeSpec {
        SchemeSpec {
            kind: SchemeKind::LevyMixed,
            horizon: 1.0,
            levels: vec![8],
            sigma: 0.7,
            intensity: 1.5,
            marks: vec![Mark { value: 1.0, prob: 0.5 }, Mark { value: -2.0, prob: 0.5 }],
            payoff: Payoff::Square,
        }
    }

    #[test]
    fn trinomial_calibration() {
        let spec = trinomial(vec![4], Payoff::Square);
        let b = spec.build_level(4).unwrap();
        let qv = predictable_variation(&b, &b.circ_process(0)).unwrap();
        let expected = qv.expected(&b);
        assert!((expected[4] - 1.0).abs() < 1e-15);
        for j in 0..4 {
            for s in 0..b.layer(j).len() {
                let second: f64 = b.node(j, s).transitions.iter().map(|t| t.prob * t.circ[0] * t.circ[0]).sum();
                assert!((second - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cp_expected_jump_count() {
        let spec = cp(vec![8], 2.0, vec![Mark { value: 1.0, prob: 1.0 }]);
        let b = spec.build_level(8).unwrap();
        let counts = b.raw_mark_process(0).expected(&b);
        assert!((counts[8] - 2.0).abs() < 1e-12);
        assert_eq!(b.layer(8).len(), 9);
    }

    #[test]
    fn intensity_limit_enforced() {
        let spec = cp(vec![2], 2.0, vec![Mark { value: 1.0, prob: 1.0 }]);
        assert!(matches!(spec.validate(), Err(SchemeError::Intensity { k: 2, .. })));
        let spec = cp(vec![4], 2.0, vec![Mark { value: 1.0, prob: 1.0 }]);
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn mixed_passes_m2prime_and_control_fails() {
        let b = mixed().build_level(8).unwrap();
        assert!(validate_m2prime(&b).passed());
        assert!(!validate_m2prime(&m2prime_violating(4, 1.0).unwrap()).passed());
    }

    #[test]
    fn incommensurate_marks_use_counters() {
        let mut spec = mixed();
        spec.kind = SchemeKind::ThinnedCompoundPoisson;
        spec.sigma = 0.0;
        spec.marks = vec![Mark { value: 1.0, prob: 0.5 }, Mark { value: std::f64::consts::SQRT_2, prob: 0.5 }];
        let b = spec.build_level(4).unwrap();
        assert_eq!(b.layer(4).len(), 15);
        assert!(validate_m2prime(&b).passed());
    }

    #[test]
    fn payoff_examples() {
        assert_eq!(Payoff::Linear.eval(0.7), 0.7);
        assert!((Payoff::Square.eval(0.7) - 0.49).abs() < 1e-15);
        assert_eq!(Payoff::IndicatorAbove { barrier: 0.0 }.eval(-0.2), 0.0);
        assert!(matches!(Payoff::from_name("digital", None), Err(SchemeError::UnknownPayoff(_))));
        let parsed: Result<Payoff, _> = serde_json::from_str(r#"{"name":"digital"}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = trinomial(vec![4, 4], Payoff::Linear);
        assert!(s.validate().is_err());
        s.levels = vec![4, 8];
        s.sigma = 0.0;
        assert!(s.validate().is_err());
        let bad = cp(vec![8], 1.0, vec![Mark { value: 1.0, prob: 0.4 }]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn coupling_is_deterministic() {
        let spec = mixed();
        let b = spec.build_level(8).unwrap();
        let a = spec.sample_coupled(&b, 5).unwrap();
        let c = spec.sample_coupled(&b, 5).unwrap();
        assert_eq!(a.discrete, c.discrete);
        assert_eq!(a.limit, c.limit);
        assert_ne!(spec.sample_coupled(&b, 6).unwrap().limit, a.limit);
    }

    #[test]
    fn walk_marginals_match_binomial() {
        // the number of up-moves in the first quarter is Bin(m/4, 1/2)
        let m = 64;
        let reps = 4000;
        let mut mean = 0.0;
        let mut second = 0.0;
        for seed in 0..reps {
            let spec = trinomial(vec![32], Payoff::Linear);
            let lim = LimitSample::draw(&spec, seed);
            let ups = walk_ups(&lim.w, m, 1.0);
            let c: f64 = ups[..m / 4].iter().map(|&u| f64::from(u)).sum();
            mean += c;
            second += c * c;
        }
        mean /= reps as f64;
        let var = second / reps as f64 - mean * mean;
        assert!((mean - 8.0).abs() < 0.15, "{mean}");
        assert!((var - 4.0).abs() < 0.4, "{var}");
    }

    #[test]
    fn walk_tracks_brownian_path() {
        let spec = trinomial(vec![256], Payoff::Linear);
        let b = spec.build_level(256).unwrap();
        let mut worst: f64 = 0.0;
        for seed in 0..20 {
            let s = spec.sample_coupled(&b, seed).unwrap();
            worst = worst.max(uniform_distance(&s.discrete.x, &s.limit.x).unwrap());
        }
        assert!(worst < 0.5, "{worst}");
    }

    #[test]
    fn pure_cp_jumps_line_up() {
        let spec = cp(vec![512], 2.0, vec![Mark { value: 1.0, prob: 0.5 }, Mark { value: -1.0, prob: 0.5 }]);
        let b = spec.build_level(512).unwrap();
        for seed in 0..50 {
            let s = spec.sample_coupled(&b, seed).unwrap();
            if !s.jumps.clean() {
                continue;
            }
            assert!(s.jumps.max_time_gap() < 1.0 / 512.0);
            let d: Vec<f64> = s.discrete.x.jumps().iter().map(|j| j.delta[0]).collect();
            let l: Vec<f64> = s.limit.x.jumps().iter().map(|j| j.delta[0]).collect();
            assert_eq!(d, l);
        }
    }

    #[test]
    fn square_closed_form_is_martingale_shaped() {
        let spec = trinomial(vec![16], Payoff::Square);
        let cf = spec.closed_form().unwrap();
        assert_eq!(cf.value(0.25, 0.5), 0.25 + 0.75);
        assert_eq!(cf.rates(0.25, 0.5).y_circ, 1.0);
        assert_eq!(cf.rates(0.25, 0.5).yy, 1.0);
        let call = trinomial(vec![16], Payoff::Call { strike: 0.0 }).closed_form().unwrap();
        assert!((call.value(0.0, 0.0) - density(0.0)).abs() < 1e-15);
        assert!(mixed().closed_form().is_some());
        let mut digital = mixed();
        digital.payoff = Payoff::IndicatorAbove { barrier: 0.0 };
        assert!(digital.closed_form().is_none());
    }

    #[test]
    fn functional_matches_direct_evaluation() {
        let spec = mixed();
        let lim = LimitSample::draw(&spec, 9);
        let y = lim.functional(&spec, |t, x| x * x + t).unwrap();
        for t in [0.0, 0.3, 0.71, 1.0] {
            let x = lim.x_at(&spec, t);
            let ft = lim.fine_times();
            let tf = ft[ft.partition_point(|&s| s <= t) - 1];
            assert!((y.evaluate(t)[0] - (x * x + tf)).abs() < 1e-9);
        }
    }
}
