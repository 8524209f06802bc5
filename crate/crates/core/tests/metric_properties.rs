use martrep::cadlag::{j1_distance, lu_distance, uniform_distance};
use martrep::CadlagPath;
use proptest::prelude::*;

fn step_path(horizon: f64) -> impl Strategy<Value = CadlagPath<f64>> {
    (-2.0..2.0f64, prop::collection::vec((0.001..0.999f64, -2.0..2.0f64), 0..6)).prop_map(move |(x0, mut jumps)| {
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        jumps.dedup_by(|a, b| a.0 == b.0);
        let scaled: Vec<(f64, f64)> = jumps.into_iter().map(|(t, d)| (t * horizon, d)).collect();
        CadlagPath::scalar_step(horizon, x0, &scaled).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn distances_are_ordered(a in step_path(1.0), b in step_path(1.0)) {
        let (j1, lu, uni) = (j1_distance(&a, &b).unwrap(), lu_distance(&a, &b).unwrap(), uniform_distance(&a, &b).unwrap());
        prop_assert!(j1 <= lu);
        prop_assert!(lu <= uni.min(1.0));
        prop_assert!(j1 >= 0.0);
    }

    #[test]
    fn j1_is_a_metric(a in step_path(2.0), b in step_path(2.0), c in step_path(2.0)) {
        let ab = j1_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, j1_distance(&b, &a).unwrap());
        prop_assert_eq!(j1_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= j1_distance(&a, &c).unwrap() + j1_distance(&c, &b).unwrap() + 1e-12);
    }

    #[test]
    fn shifting_every_jump_costs_at_most_the_shift(a in step_path(1.0), shift in 0.0..0.0005f64) {
        let shifted: Vec<(f64, f64)> = a.jumps().iter().map(|j| (j.time + shift, j.delta[0])).collect();
        let b = CadlagPath::scalar_step(1.0, a.initial()[0], &shifted).unwrap();
        prop_assert!(j1_distance(&a, &b).unwrap() <= shift + 1e-12);
    }

    #[test]
    fn adding_a_constant_is_uniform(a in step_path(1.0), c in -0.5..0.5f64) {
        let b = a.add(&CadlagPath::constant(1.0, vec![c]).unwrap()).unwrap();
        let d = j1_distance(&a, &b).unwrap();
        prop_assert!((d - c.abs().min(1.0)).abs() <= 1e-12);
    }
}
