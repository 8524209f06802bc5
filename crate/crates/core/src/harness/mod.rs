//! Experiment runner: sweeps the refinement levels of a scheme, decomposes
//! the payoff martingale exactly on every level, and measures convergence
//! against the coupled limit over Monte Carlo replications.

mod report;
mod stats;

use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brackets::{kunita_watanabe_gap, polarization_residual, BracketError};
use crate::cadlag::{j1_distance_with_tolerance, lu_distance, CadlagPath, JumpWindow, PathError};
use crate::gkw::{angle_brackets, validate_m2prime, AngleBrackets, Decomposition, GkwError, M2Verdict, Projector};
use crate::lattice::{AdaptedProcess, LatticeBasis, LatticeError, LatticePath};
use crate::rng::derive_seed;
use crate::schemes::{m2prime_violating, ClosedForm, LimitSample, Payoff, SchemeError, SchemeSpec, FINE_STEPS};

pub use self::report::{
    read_report, verify, write_report, BracketErrors, ExactStats, ExperimentReport, FiltrationEntry, FiltrationReport,
    IdentityStats, JointStats, JumpStats, LevelReport, MonteCarloStats, NegativeControls, Reference, VerifyOutcome,
    CSV_HEADER, SCHEMA_VERSION,
};
pub use self::stats::{estimate_in_probability_convergence, ExceedanceCurve, Summary};

/// Tolerance of the exact identity suite, relative to `max(1, E⟨Y⟩_T)`.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;
/// Tolerance on decomposition diagnostics.
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no samples")]
    EmptySamples,
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Gkw(#[from] GkwError),
    #[error(transparent)]
    Bracket(#[from] BracketError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", .path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {message}", .path.display())]
    Malformed { path: PathBuf, message: String },
}

fn default_epsilons() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4]
}

fn default_reference_cells() -> usize {
    1024
}

fn default_j1_tolerance() -> f64 {
    1e-7
}

fn default_joint_replications() -> usize {
    100
}

fn default_diagnostic_payoffs() -> Vec<Payoff> {
    vec![Payoff::Linear, Payoff::Square, Payoff::Constant { value: 1.0 }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: SchemeSpec,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub filtration_diagnostic: bool,
    #[serde(default)]
    pub negative_controls: bool,
    /// Payoffs examined by the filtration diagnostic.
    #[serde(default = "default_diagnostic_payoffs")]
    pub diagnostic_payoffs: Vec<Payoff>,
    /// Cells of the grid on which closed-form limit paths are sampled.
    #[serde(default = "default_reference_cells")]
    pub reference_cells: usize,
    /// Absolute tolerance of the J1 bisection.
    #[serde(default = "default_j1_tolerance")]
    pub j1_tolerance: f64,
    /// Replications on which the joint three-dimensional J1 distance is taken.
    #[serde(default = "default_joint_replications")]
    pub joint_replications: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &FsPath) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.into(), source })?;
        Self::from_json(&text).map_err(|source| HarnessError::Json { path: path.into(), source })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scheme.validate()?;
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("epsilons must be positive");
        }
        if !self.reference_cells.is_power_of_two() || self.reference_cells > FINE_STEPS {
            return bad("reference_cells must be a power of two not above 4096");
        }
        if self.joint_replications == 0 {
            return bad("joint_replications must be at least 1");
        }
        if !(self.j1_tolerance > 0.0) {
            return bad("j1_tolerance must be positive");
        }
        Ok(())
    }
}

/// Exact objects of one level.
struct LevelModel {
    k: usize,
    basis: LatticeBasis<f64>,
    y: AdaptedProcess<f64>,
    decomposition: Decomposition<f64>,
    brackets: AngleBrackets<f64>,
}

/// Values of the level processes along one lattice path, at the grid times.
struct Along {
    y: Vec<f64>,
    integral: Vec<f64>,
    n: Vec<f64>,
    /// `⟨Y⟩, ⟨Y,X⟩, ⟨Y,X∘⟩, ⟨Y,X♮⟩`.
    brackets: [Vec<f64>; 4],
}

impl LevelModel {
    fn build(spec: &SchemeSpec, k: usize) -> Result<Self, HarnessError> {
        let basis = spec.build_level(k)?;
        let y = spec.value_process(&basis)?;
        let decomposition = Projector::new(&basis)?.decompose(&basis, &y.increments(&basis)?)?;
        let brackets = angle_brackets(&basis, &decomposition)?;
        Ok(Self { k, basis, y, decomposition, brackets })
    }

    fn along(&self, path: &LatticePath) -> Along {
        let d = &self.decomposition;
        let b = &self.brackets;
        let zx = d.z_dot_x.along(path);
        let um = d.u_star_mu.along(path);
        Along {
            y: self.y.along(path),
            integral: zx.iter().zip(&um).map(|(a, c)| a + c).collect(),
            n: d.n.along(path),
            brackets: [b.y.along(path), b.y_x[0].along(path), b.y_circ[0].along(path), b.y_nat[0].along(path)],
        }
    }

    fn exact(&self) -> ExactStats {
        let last = |p: &crate::lattice::TransitionProcess<f64>| *p.expected(&self.basis).last().unwrap();
        let b = &self.brackets;
        let g = &self.decomposition.diagnostics;
        ExactStats {
            y0: *self.y.initial(),
            n_bracket: last(&b.n),
            y_bracket: last(&b.y),
            yx_bracket: last(&b.y_x[0]),
            y_circ_bracket: last(&b.y_circ[0]),
            y_nat_bracket: last(&b.y_nat[0]),
            energy_residual: g.energy_residual,
            decomposition_residual: g.worst(),
            rank_deficient_states: g.rank_deficient_states,
        }
    }

    fn identities(&self) -> Result<IdentityStats, HarnessError> {
        let b = &self.brackets;
        let d = &self.decomposition;
        let x = self.basis.x_process(0);
        let polarization =
            polarization_residual(&self.basis, &d.y, &d.n)?.max(polarization_residual(&self.basis, &d.y, &x)?);
        let (mut special_martingale, mut special_identity) = (0.0f64, 0.0f64);
        for window in
            [JumpWindow::scalar(f64::MIN_POSITIVE, f64::MAX)?, JumpWindow::scalar(-f64::MAX, -f64::MIN_POSITIVE)?]
        {
            let c = self.basis.special_decomposition_check(&window)?;
            special_martingale = special_martingale.max(c.martingale_residual);
            special_identity = special_identity.max(c.identity_residual);
        }
        Ok(IdentityStats {
            yn: b.yn_residual(),
            additivity: b.additivity_residual(),
            split: b.split_residual(),
            polarization,
            special_martingale,
            special_identity,
            kunita_watanabe: 0.0,
        })
    }
}

fn grid_path(times: &[f64], values: &[f64]) -> Result<CadlagPath<f64>, PathError> {
    CadlagPath::from_breakpoints(
        *times.last().unwrap(),
        1,
        vec![values[0]],
        times[1..].to_vec(),
        values[1..].iter().map(|v| vec![*v]).collect(),
    )
}

/// Limit objects of one replication.
struct LimitReference {
    y: CadlagPath<f64>,
    integral: CadlagPath<f64>,
    /// Bracket references on a uniform grid of `grid` cells.
    brackets: [Vec<f64>; 4],
    grid: usize,
}

impl LimitReference {
    fn closed_form(
        spec: &SchemeSpec,
        cf: &ClosedForm,
        limit: &LimitSample,
        cells: usize,
    ) -> Result<Self, HarnessError> {
        let y = limit.functional_on(spec, cells, |t, x| cf.value(t, x))?;
        let y0 = cf.value(0.0, 0.0);
        let integral = limit.functional_on(spec, cells, |t, x| cf.value(t, x) - y0)?;
        let xs = limit.x_fine(spec);
        let dt = spec.horizon / FINE_STEPS as f64;
        let mut brackets: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; FINE_STEPS + 1]);
        for i in 0..FINE_STEPS {
            let r = cf.rates(spec.horizon * i as f64 / FINE_STEPS as f64, xs[i]);
            for (b, rate) in brackets.iter_mut().zip([r.yy, r.y_circ + r.y_nat, r.y_circ, r.y_nat]) {
                b[i + 1] = b[i] + rate * dt;
            }
        }
        Ok(Self { y, integral, brackets, grid: FINE_STEPS })
    }

    fn self_referenced(finest: &LevelModel, path: &LatticePath, times: &[f64]) -> Result<Self, HarnessError> {
        let a = finest.along(path);
        let y0 = a.y[0];
        let shifted: Vec<f64> = a.y.iter().map(|v| v - y0).collect();
        Ok(Self {
            y: grid_path(times, &a.y)?,
            integral: grid_path(times, &shifted)?,
            brackets: a.brackets,
            grid: finest.k,
        })
    }

    fn bracket_at(&self, which: usize, j: usize, k: usize) -> f64 {
        self.brackets[which][j * self.grid / k]
    }
}

/// Statistics of one replication at one level.
#[derive(Debug, Clone, Copy, Default)]
struct RepStats {
    y_j1: f64,
    integral_j1: f64,
    n_j1: f64,
    joint_j1: Option<f64>,
    sup_n: f64,
    bracket_l1: [f64; 4],
    kw_gap: f64,
    clean: bool,
    jump_gap: f64,
}

fn kw_excess(a: &CadlagPath<f64>, b: &CadlagPath<f64>) -> Result<f64, HarnessError> {
    let gap = kunita_watanabe_gap(a, b)?;
    let aa = crate::brackets::quadratic_covariation(a, a)?.terminal()[0];
    let bb = crate::brackets::quadratic_covariation(b, b)?.terminal()[0];
    // positive values are violations beyond rounding
    Ok(gap - IDENTITY_TOLERANCE * (1.0 + (aa * bb).sqrt()))
}

fn level_distances(
    config: &ExperimentConfig,
    model: &LevelModel,
    times: &[f64],
    sample: &crate::schemes::CoupledSample,
    reference: &LimitReference,
    joint: bool,
) -> Result<RepStats, HarnessError> {
    let tol = config.j1_tolerance;
    let k = model.k;
    let a = model.along(sample.path());
    let y = grid_path(times, &a.y)?;
    let integral = grid_path(times, &a.integral)?;
    let n = grid_path(times, &a.n)?;
    let zero = CadlagPath::constant(config.scheme.horizon, vec![0.0])?;
    let y_j1 = j1_distance_with_tolerance(&y, &reference.y, tol)?.value;
    let integral_j1 = j1_distance_with_tolerance(&integral, &reference.integral, tol)?.value;
    // no time change helps against a constant path
    let n_j1 = lu_distance(&n, &zero)?;
    let joint_j1 = if joint {
        let stacked = CadlagPath::stack(&[&y, &integral, &n])?;
        let stacked_ref = CadlagPath::stack(&[&reference.y, &reference.integral, &zero])?;
        Some(j1_distance_with_tolerance(&stacked, &stacked_ref, tol)?.value)
    } else {
        None
    };
    let dt = config.scheme.horizon / k as f64;
    let mut bracket_l1 = [0.0; 4];
    for (w, slot) in bracket_l1.iter_mut().enumerate() {
        *slot = (1..=k).map(|j| (a.brackets[w][j] - reference.bracket_at(w, j, k)).abs() * dt).sum();
    }
    let x = &sample.discrete.x;
    let kw_gap = kw_excess(&y, x)?.max(kw_excess(&n, x)?);
    Ok(RepStats {
        y_j1,
        integral_j1,
        n_j1,
        joint_j1,
        sup_n: a.n.iter().fold(0.0, |m, v| m.max(v.abs())),
        bracket_l1,
        kw_gap,
        clean: sample.jumps.clean(),
        jump_gap: sample.jumps.max_time_gap(),
    })
}

fn summarize(config: &ExperimentConfig, reps: &[RepStats], jumps: bool) -> Result<MonteCarloStats, HarnessError> {
    let col = |f: &dyn Fn(&RepStats) -> f64| reps.iter().map(f).collect::<Vec<f64>>();
    let y = col(&|r| r.y_j1);
    let integral = col(&|r| r.integral_j1);
    let curve = |s: &[f64]| -> Result<Vec<(f64, f64)>, HarnessError> {
        config
            .epsilons
            .iter()
            .map(|&e| estimate_in_probability_convergence(&[s.to_vec()], e).map(|c| (e, c.fractions[0])))
            .collect()
    };
    let (joint, components): (Vec<f64>, Vec<f64>) =
        reps.iter().filter_map(|r| r.joint_j1.map(|j| (j, r.y_j1.max(r.integral_j1).max(r.n_j1)))).unzip();
    let excess = joint.iter().zip(&components).map(|(j, c)| j - c).sum::<f64>() / joint.len() as f64;
    let smallest = config.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let clean: Vec<&RepStats> = reps.iter().filter(|r| r.clean).collect();
    Ok(MonteCarloStats {
        replications: reps.len(),
        y_j1: Summary::of(&y)?,
        integral_j1: Summary::of(&integral)?,
        n_j1: Summary::of(&col(&|r| r.n_j1))?,
        sup_n: Summary::of(&col(&|r| r.sup_n))?,
        bracket_l1: BracketErrors {
            yy: Summary::of(&col(&|r| r.bracket_l1[0]))?,
            yx: Summary::of(&col(&|r| r.bracket_l1[1]))?,
            y_circ: Summary::of(&col(&|r| r.bracket_l1[2]))?,
            y_nat: Summary::of(&col(&|r| r.bracket_l1[3]))?,
        },
        y_exceedance: curve(&y)?,
        integral_exceedance: curve(&integral)?,
        joint: JointStats {
            replications: joint.len(),
            joint_j1: Summary::of(&joint)?,
            componentwise_max: Summary::of(&components)?,
            mean_excess: excess,
            discrepancy: excess > smallest,
        },
        jumps: jumps.then(|| JumpStats {
            clean_fraction: clean.len() as f64 / reps.len() as f64,
            max_gap_clean: clean.iter().map(|r| r.jump_gap).fold(0.0, f64::max),
        }),
        kunita_watanabe_excess: reps.iter().map(|r| r.kw_gap).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Exact per-level quantities, shared by [`run`] and [`verify`].
pub fn exact_level(spec: &SchemeSpec, k: usize) -> Result<(ExactStats, IdentityStats, bool), HarnessError> {
    let m = LevelModel::build(spec, k)?;
    Ok((m.exact(), m.identities()?, validate_m2prime(&m.basis).passed()))
}

/// Run an experiment. Deterministic in the config.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let spec = &config.scheme;
    let models: Vec<LevelModel> = spec.levels.iter().map(|&k| LevelModel::build(spec, k)).collect::<Result<_, _>>()?;
    let closed = spec.closed_form();
    let finest = models.last().expect("levels are nonempty");
    let finest_times = spec.times(finest.k);
    if closed.is_none() && spec.levels.iter().any(|k| !finest.k.is_multiple_of(*k)) {
        return Err(HarnessError::Config("self-referenced limits need every level to divide the finest".into()));
    }

    let per_rep: Vec<Vec<RepStats>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<RepStats>, HarnessError> {
            let seed = derive_seed(config.seed, &[r]);
            let limit = LimitSample::draw(spec, seed);
            let reference = match &closed {
                Some(cf) => LimitReference::closed_form(spec, cf, &limit, config.reference_cells)?,
                None => {
                    let s = spec.couple(&finest.basis, &limit, seed)?;
                    LimitReference::self_referenced(finest, s.path(), &finest_times)?
                }
            };
            models
                .iter()
                .map(|m| {
                    let sample = spec.couple(&m.basis, &limit, seed)?;
                    level_distances(
                        config,
                        m,
                        &spec.times(m.k),
                        &sample,
                        &reference,
                        r < config.joint_replications as u64,
                    )
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let mut violations = Vec::new();
    let mut levels = Vec::with_capacity(models.len());
    for (i, m) in models.iter().enumerate() {
        let reps: Vec<RepStats> = per_rep.iter().map(|r| r[i]).collect();
        let exact = m.exact();
        let mut identities = m.identities()?;
        let mc = summarize(config, &reps, spec.has_jumps())?;
        identities.kunita_watanabe = mc.kunita_watanabe_excess.max(0.0);
        let m2prime = validate_m2prime(&m.basis).passed();
        violations.extend(level_violations(m.k, &exact, &identities, m2prime));
        levels.push(LevelReport {
            k: m.k,
            states: m.basis.state_count(),
            transitions: m.basis.transition_count(),
            m2prime,
            exact,
            identities,
            monte_carlo: mc,
        });
    }
    let filtration = if config.filtration_diagnostic {
        Some(filtration_weak_convergence_diagnostic(config, &config.diagnostic_payoffs)?)
    } else {
        None
    };
    let negative_controls = if config.negative_controls {
        let nc = negative_controls(spec.horizon)?;
        if !nc.m2prime_rejected || !nc.projector_rejected {
            violations.push("negative control: an (M2′)-violating lattice was accepted".into());
        }
        Some(nc)
    } else {
        None
    };
    let n_brackets: Vec<f64> = levels.iter().map(|l| l.exact.n_bracket).collect();
    Ok(ExperimentReport {
        schema: SCHEMA_VERSION.to_string(),
        config: config.clone(),
        reference: Reference {
            closed_form: closed.is_some(),
            self_referenced_level: closed.is_none().then_some(finest.k),
        },
        levels,
        n_bracket_decreasing: n_brackets.windows(2).all(|w| w[1] < w[0]),
        filtration,
        negative_controls,
        violations,
    })
}

fn level_violations(k: usize, exact: &ExactStats, id: &IdentityStats, m2prime: bool) -> Vec<String> {
    let tol = IDENTITY_TOLERANCE * exact.y_bracket.abs().max(1.0);
    let mut out = Vec::new();
    let mut check = |name: &str, v: f64, tol: f64| {
        if !(v <= tol) {
            out.push(format!("level {k}: {name} residual {v:e} exceeds {tol:e}"));
        }
    };
    check("⟨Y,N⟩ = ⟨N⟩", id.yn, tol);
    check("bracket additivity", id.additivity, tol);
    check("⟨Y,X⟩ split", id.split, tol);
    check("polarization", id.polarization, tol);
    check("special decomposition (martingale)", id.special_martingale, tol);
    check("special decomposition (identity)", id.special_identity, tol);
    check("Kunita–Watanabe", id.kunita_watanabe, 0.0);
    check("decomposition", exact.decomposition_residual, DECOMPOSITION_TOLERANCE);
    if !m2prime {
        out.push(format!("level {k}: lattice fails (M2′)"));
    }
    out
}

/// Conditional-expectation paths `E[ξ | G^k_·]` against their closed-form
/// limits, for each payoff in `payoffs`, on the levels and seeds of `config`.
pub fn filtration_weak_convergence_diagnostic(
    config: &ExperimentConfig,
    payoffs: &[Payoff],
) -> Result<FiltrationReport, HarnessError> {
    config.validate()?;
    let base = &config.scheme;
    let bases: Vec<LatticeBasis<f64>> = base.levels.iter().map(|&k| base.build_level(k)).collect::<Result<_, _>>()?;
    let mut entries = Vec::with_capacity(payoffs.len());
    for &payoff in payoffs {
        let spec = SchemeSpec { payoff, ..base.clone() };
        let Some(cf) = spec.closed_form() else {
            entries.push(FiltrationEntry {
                payoff,
                closed_form: false,
                j1: vec![],
                terminal_l1: vec![],
                decreasing: false,
            });
            continue;
        };
        let values: Vec<AdaptedProcess<f64>> = bases.iter().map(|b| spec.value_process(b)).collect::<Result<_, _>>()?;
        let per_rep: Vec<Vec<(f64, f64)>> = (0..config.replications as u64)
            .into_par_iter()
            .map(|r| -> Result<Vec<(f64, f64)>, HarnessError> {
                let seed = derive_seed(config.seed, &[r]);
                let limit = LimitSample::draw(&spec, seed);
                let reference = limit.functional_on(&spec, config.reference_cells, |t, x| cf.value(t, x))?;
                let terminal = payoff.eval(limit.x_at(&spec, spec.horizon));
                bases
                    .iter()
                    .zip(&values)
                    .map(|(b, v)| {
                        let s = spec.couple(b, &limit, seed)?;
                        let along = v.along(s.path());
                        let path = grid_path(&spec.times(b.steps()), &along)?;
                        let d = j1_distance_with_tolerance(&path, &reference, config.j1_tolerance)?.value;
                        Ok((d, (along.last().unwrap() - terminal).abs()))
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        let mut j1 = Vec::with_capacity(bases.len());
        let mut terminal_l1 = Vec::with_capacity(bases.len());
        for i in 0..bases.len() {
            j1.push(Summary::of(&per_rep.iter().map(|r| r[i].0).collect::<Vec<_>>())?);
            terminal_l1.push(per_rep.iter().map(|r| r[i].1).sum::<f64>() / per_rep.len() as f64);
        }
        let decreasing = j1.windows(2).all(|w| w[1].mean < w[0].mean);
        entries.push(FiltrationEntry { payoff, closed_form: true, j1, terminal_l1, decreasing });
    }
    // every scheme kind has independent increments by construction
    Ok(FiltrationReport { independent_increments: true, entries })
}

/// An (M2′)-violating lattice must be rejected by the validator and by the
/// projector.
pub fn negative_controls(horizon: f64) -> Result<NegativeControls, HarnessError> {
    let b = m2prime_violating(4, horizon)?;
    let verdict = validate_m2prime(&b);
    let witness = match &verdict {
        M2Verdict::Pass => None,
        M2Verdict::Fail(w) => {
            Some(format!("step {}, state {}, mark {:?}: E[ΔX∘ 1_mark] = {}", w.step, w.state, w.mark, w.value))
        }
    };
    Ok(NegativeControls {
        m2prime_rejected: !verdict.passed(),
        projector_rejected: matches!(Projector::new(&b), Err(GkwError::M2Violation(_))),
        witness,
    })
}

/// Run and write `report.json` and `convergence.csv` into `dir`.
pub fn run_to(config: &ExperimentConfig, dir: &FsPath) -> Result<ExperimentReport, HarnessError> {
    let report = run(config)?;
    write_report(&report, dir)?;
    Ok(report)
}
