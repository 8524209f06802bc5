//! Report types, on-disk output and re-verification.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{exact_level, ExperimentConfig, HarnessError, Summary};
use crate::schemes::Payoff;

pub const SCHEMA_VERSION: &str = "martrep-report/1";
pub const CSV_HEADER: [&str; 7] = ["level", "metric", "epsilon", "value", "exact_flag", "replications", "seed"];
const VERIFY_TOLERANCE: f64 = 1e-9;

/// Expected terminal values and residuals computed exactly on the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactStats {
    pub y0: f64,
    /// `E⟨N⟩_T`.
    pub n_bracket: f64,
    pub y_bracket: f64,
    pub yx_bracket: f64,
    pub y_circ_bracket: f64,
    pub y_nat_bracket: f64,
    pub energy_residual: f64,
    pub decomposition_residual: f64,
    pub rank_deficient_states: usize,
}

/// Largest residuals of the bracket identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityStats {
    pub yn: f64,
    pub additivity: f64,
    pub split: f64,
    pub polarization: f64,
    pub special_martingale: f64,
    pub special_identity: f64,
    /// Largest excess of `Var[a,b]` over `([a][b])^{1/2}` on sampled paths.
    pub kunita_watanabe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketErrors {
    pub yy: Summary,
    pub yx: Summary,
    pub y_circ: Summary,
    pub y_nat: Summary,
}

/// J1 distance of `(Y, Z·X∘ + U⋆μ̃, N)` taken jointly against the largest
/// componentwise distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointStats {
    /// Replications the joint distance was taken on.
    pub replications: usize,
    pub joint_j1: Summary,
    pub componentwise_max: Summary,
    pub mean_excess: f64,
    /// Mean excess above the smallest ε.
    pub discrepancy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpStats {
    /// Fraction of replications with no collision and no spurious jump.
    pub clean_fraction: f64,
    /// Largest time gap between matched jumps on clean replications.
    pub max_gap_clean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloStats {
    pub replications: usize,
    pub y_j1: Summary,
    pub integral_j1: Summary,
    pub n_j1: Summary,
    pub sup_n: Summary,
    /// `Σ_j |B^k_{t_j} − B^∞_{t_j}| T/k` per bracket.
    pub bracket_l1: BracketErrors,
    /// `(ε, P(d_J1(Y^k, Y^∞) > ε))`.
    pub y_exceedance: Vec<(f64, f64)>,
    pub integral_exceedance: Vec<(f64, f64)>,
    pub joint: JointStats,
    pub jumps: Option<JumpStats>,
    pub kunita_watanabe_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub k: usize,
    pub states: usize,
    pub transitions: usize,
    pub m2prime: bool,
    pub exact: ExactStats,
    pub identities: IdentityStats,
    pub monte_carlo: MonteCarloStats,
}

/// How the limit paths were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub closed_form: bool,
    /// Level used as the limit when no closed form exists.
    pub self_referenced_level: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationEntry {
    pub payoff: Payoff,
    pub closed_form: bool,
    pub j1: Vec<Summary>,
    /// `E|ξ(X^k_T) − ξ(X^∞_T)|` per level.
    pub terminal_l1: Vec<f64>,
    pub decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationReport {
    pub independent_increments: bool,
    pub entries: Vec<FiltrationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeControls {
    pub m2prime_rejected: bool,
    pub projector_rejected: bool,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub reference: Reference,
    pub levels: Vec<LevelReport>,
    /// Whether `E⟨N^k⟩_T` strictly decreases along the levels.
    pub n_bracket_decreasing: bool,
    pub filtration: Option<FiltrationReport>,
    pub negative_controls: Option<NegativeControls>,
    pub violations: Vec<String>,
}

impl ExperimentReport {
    pub fn level(&self, k: usize) -> Option<&LevelReport> {
        self.levels.iter().find(|l| l.k == k)
    }

    /// Rows of `convergence.csv`.
    pub fn csv_rows(&self) -> Vec<[String; 7]> {
        let seed = self.config.seed.to_string();
        let mut rows = Vec::new();
        for l in &self.levels {
            let e = &l.exact;
            for (metric, v) in [
                ("y0", e.y0),
                ("n_bracket", e.n_bracket),
                ("y_bracket", e.y_bracket),
                ("yx_bracket", e.yx_bracket),
                ("y_circ_bracket", e.y_circ_bracket),
                ("y_nat_bracket", e.y_nat_bracket),
            ] {
                rows.push(row(l.k, metric, None, v, true, 0, &seed));
            }
            let mc = &l.monte_carlo;
            let reps = mc.replications;
            for (metric, v) in [
                ("y_j1_mean", mc.y_j1.mean),
                ("y_j1_rms", mc.y_j1.root_mean_square),
                ("integral_j1_mean", mc.integral_j1.mean),
                ("integral_j1_rms", mc.integral_j1.root_mean_square),
                ("n_j1_mean", mc.n_j1.mean),
                ("sup_n_mean", mc.sup_n.mean),
                ("bracket_yy_l1", mc.bracket_l1.yy.mean),
                ("bracket_yx_l1", mc.bracket_l1.yx.mean),
                ("bracket_y_circ_l1", mc.bracket_l1.y_circ.mean),
                ("bracket_y_nat_l1", mc.bracket_l1.y_nat.mean),
            ] {
                rows.push(row(l.k, metric, None, v, false, reps, &seed));
            }
            rows.push(row(l.k, "joint_j1_mean", None, mc.joint.joint_j1.mean, false, mc.joint.replications, &seed));
            for (metric, curve) in
                [("y_exceedance", &mc.y_exceedance), ("integral_exceedance", &mc.integral_exceedance)]
            {
                for &(eps, frac) in curve {
                    rows.push(row(l.k, metric, Some(eps), frac, false, reps, &seed));
                }
            }
        }
        rows
    }
}

fn row(k: usize, metric: &str, eps: Option<f64>, v: f64, exact: bool, reps: usize, seed: &str) -> [String; 7] {
    [
        k.to_string(),
        metric.to_string(),
        eps.map(|e| e.to_string()).unwrap_or_default(),
        v.to_string(),
        u8::from(exact).to_string(),
        reps.to_string(),
        seed.to_string(),
    ]
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.into(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Malformed { path: path.into(), message: e.to_string() }
}

/// Write `report.json` and `convergence.csv` into `dir`, creating it.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let json_path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|source| HarnessError::Json { path: json_path.clone(), source })?;
    text.push('\n');
    fs::write(&json_path, text).map_err(io_err(&json_path))?;
    let csv_path = dir.join("convergence.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err(&csv_path))?;
    w.write_record(CSV_HEADER).map_err(csv_err(&csv_path))?;
    for r in report.csv_rows() {
        w.write_record(&r).map_err(csv_err(&csv_path))?;
    }
    w.flush().map_err(io_err(&csv_path))
}

pub fn read_report(dir: &Path) -> Result<ExperimentReport, HarnessError> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json { path, source })
}

/// Result of [`verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub levels_checked: usize,
    pub rows_checked: usize,
    pub mismatches: Vec<String>,
}

impl VerifyOutcome {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= VERIFY_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Recompute the exact quantities of a written report and check that the
/// CSV agrees with the JSON.
pub fn verify(dir: &Path) -> Result<VerifyOutcome, HarnessError> {
    let report = read_report(dir)?;
    let json_path = dir.join("report.json");
    if report.schema != SCHEMA_VERSION {
        return Err(HarnessError::Malformed {
            path: json_path,
            message: format!("unknown schema {:?}", report.schema),
        });
    }
    let mut mismatches = Vec::new();
    for l in &report.levels {
        let (exact, identities, m2prime) = exact_level(&report.config.scheme, l.k)?;
        let w = &l.exact;
        for (name, got, want) in [
            ("y0", w.y0, exact.y0),
            ("n_bracket", w.n_bracket, exact.n_bracket),
            ("y_bracket", w.y_bracket, exact.y_bracket),
            ("yx_bracket", w.yx_bracket, exact.yx_bracket),
            ("y_circ_bracket", w.y_circ_bracket, exact.y_circ_bracket),
            ("y_nat_bracket", w.y_nat_bracket, exact.y_nat_bracket),
            ("energy_residual", w.energy_residual, exact.energy_residual),
            ("decomposition_residual", w.decomposition_residual, exact.decomposition_residual),
            ("yn", l.identities.yn, identities.yn),
            ("additivity", l.identities.additivity, identities.additivity),
            ("split", l.identities.split, identities.split),
            ("polarization", l.identities.polarization, identities.polarization),
        ] {
            if !close(got, want) {
                mismatches.push(format!("level {}: {name} is {got}, recomputed {want}", l.k));
            }
        }
        if l.m2prime != m2prime {
            mismatches.push(format!("level {}: (M2′) flag is {}, recomputed {m2prime}", l.k, l.m2prime));
        }
    }
    let csv_path = dir.join("convergence.csv");
    let mut reader = csv::Reader::from_path(&csv_path).map_err(csv_err(&csv_path))?;
    let header = reader.headers().map_err(csv_err(&csv_path))?.clone();
    if header.iter().ne(CSV_HEADER) {
        mismatches.push(format!("convergence.csv header is {:?}", header.iter().collect::<Vec<_>>()));
    }
    let expected = report.csv_rows();
    let mut rows_checked = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err(&csv_path))?;
        match expected.get(i) {
            Some(want) if rec.iter().eq(want.iter().map(String::as_str)) => {}
            Some(want) => mismatches.push(format!("convergence.csv row {}: {:?} differs from {:?}", i + 1, rec, want)),
            None => mismatches.push(format!("convergence.csv row {}: unexpected", i + 1)),
        }
        rows_checked += 1;
    }
    if rows_checked < expected.len() {
        mismatches.push(format!("convergence.csv has {rows_checked} rows, expected {}", expected.len()));
    }
    Ok(VerifyOutcome { levels_checked: report.levels.len(), rows_checked, mismatches })
}
