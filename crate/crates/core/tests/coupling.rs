use martrep::cadlag::uniform_distance;
use martrep::harness::{run, ExperimentConfig};
use martrep::rng::derive_seed;
use martrep::schemes::{LimitSample, Mark, Payoff, SchemeKind, SchemeSpec};

fn brownian(kind: SchemeKind) -> SchemeSpec {
    SchemeSpec {
        kind,
        horizon: 1.0,
        levels: vec![16, 64],
        sigma: 1.0,
        intensity: 0.0,
        marks: vec![],
        payoff: Payoff::Linear,
    }
}

#[test]
fn coupled_walks_approach_the_brownian_path() {
    for kind in [SchemeKind::TrinomialBm, SchemeKind::BinomialBm] {
        let spec = brownian(kind);
        let (coarse, fine) = (spec.build_level(16).unwrap(), spec.build_level(64).unwrap());
        let mut closer = 0;
        for r in 0..200 {
            let seed = derive_seed(3, &[r]);
            let limit = LimitSample::draw(&spec, seed);
            let w = limit.paths(&spec).unwrap().x;
            let a = spec.couple(&coarse, &limit, seed).unwrap();
            let b = spec.couple(&fine, &limit, seed).unwrap();
            let (da, db) = (uniform_distance(&a.discrete.x, &w).unwrap(), uniform_distance(&b.discrete.x, &w).unwrap());
            closer += usize::from(db < da);
        }
        assert!(closer >= 180, "{kind:?}: refinement helped in {closer} of 200 replications");
    }
}

#[test]
fn coupled_levels_share_the_limit_jumps() {
    let spec = SchemeSpec {
        kind: SchemeKind::LevyMixed,
        horizon: 1.0,
        levels: vec![32],
        sigma: 0.5,
        intensity: 1.0,
        marks: vec![Mark { value: 0.5, prob: 0.3 }, Mark { value: -1.0, prob: 0.7 }],
        payoff: Payoff::Linear,
    };
    let basis = spec.build_level(32).unwrap();
    for r in 0..50 {
        let seed = derive_seed(9, &[r]);
        let limit = LimitSample::draw(&spec, seed);
        let s = spec.couple(&basis, &limit, seed).unwrap();
        if s.jumps.collisions == 0 {
            assert_eq!(s.jumps.matched.len(), limit.jumps.len());
            assert!(s.jumps.max_time_gap() <= 1.0 / 32.0 + 1e-12);
        }
    }
}

#[test]
fn levy_mixed_run_is_clean() {
    let config: ExperimentConfig = serde_json::from_value(serde_json::json!({
        "scheme": {
            "kind": "levy_mixed",
            "horizon": 1.0,
            "levels": [4, 8, 16],
            "sigma": 1.0,
            "intensity": 1.5,
            "marks": [{ "value": 1.0, "prob": 0.25 }, { "value": -0.5, "prob": 0.75 }],
            "payoff": { "name": "square" }
        },
        "replications": 20,
        "seed": 5,
        "negative_controls": true,
        "filtration_diagnostic": true
    }))
    .unwrap();
    let report = run(&config).unwrap();
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    assert!(report.reference.closed_form);
    assert!(report.n_bracket_decreasing);
    for l in &report.levels {
        assert!(l.m2prime);
        assert!(l.exact.n_bracket > 0.0);
        assert!((l.exact.yx_bracket - l.exact.y_circ_bracket - l.exact.y_nat_bracket).abs() < 1e-12);
    }
    let nc = report.negative_controls.unwrap();
    assert!(nc.m2prime_rejected && nc.projector_rejected && nc.witness.is_some());
    let f = report.filtration.unwrap();
    assert_eq!(f.entries.len(), 3);
    assert!(f.entries.iter().all(|e| e.closed_form));
}
