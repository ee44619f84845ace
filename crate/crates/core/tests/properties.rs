//! Randomized invariants of the propagation, exponent and spectrum layers.

use dichotomy::bohl::{lower_bohl, upper_bohl, SearchConfig, WindowGrid, Workspace};
use dichotomy::grassmann::{principal_angles, sample_in, sample_uniform};
use dichotomy::propagation::{cocycle_check, restricted_extremes, transition};
use dichotomy::spectrum::{
    certify_dichotomy, check_d2, compute_spectrum, j_ed, maximal_uniformity, observed_tail_constant,
    tail_to_global_constant, Verdict,
};
use dichotomy::systems::{empirical_bounds, make_random, make_split_random, CoefficientSequence, TimeDomain};
use dichotomy::{Splitting, Subspace};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const HORIZON: usize = 96;

fn random(d: usize, seed: u64) -> CoefficientSequence<f64> {
    make_random(d, TimeDomain::TwoSided, HORIZON, 0.3, seed)
}

fn cheap() -> SearchConfig {
    SearchConfig { outer_starts: 6, inner_samples: 12, rounds: 6, check_samples: 6, ..SearchConfig::default() }
}

fn f(e: dichotomy::Extended<f64>) -> f64 {
    e.to_f64()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn inverses_match(d in 1usize..4, seed in 0u64..1000, n in -96i64..96) {
        let sys = random(d, seed);
        let defect = (sys.eval_inv(n) * sys.eval(n) - DMatrix::identity(d, d)).norm();
        prop_assert!(defect < 1e-10, "defect {defect}");
    }

    #[test]
    fn cocycle_and_inverse_transitions(d in 1usize..4, seed in 0u64..1000, m in -40i64..40, k in -40i64..40, n in -40i64..40) {
        let sys = random(d, seed);
        prop_assert!(cocycle_check(&sys, m, k, n).unwrap() <= 1e-8);
        let mut round = transition(&sys, m, n).unwrap();
        round.left_mul_scaled(&transition(&sys, n, m).unwrap());
        let defect = (round.to_matrix() - DMatrix::identity(d, d)).norm();
        prop_assert!(defect <= 1e-8, "defect {defect}");
    }

    #[test]
    fn lines_have_equal_extremes(d in 1usize..4, seed in 0u64..1000, m in 0i64..30, len in 0i64..30) {
        let sys = random(d, seed);
        let u: Subspace = sample_uniform(d, 1, 1, seed).unwrap().remove(0);
        let r = restricted_extremes(&sys, &u, m, m + len).unwrap();
        prop_assert_eq!(r.log_sigma_max, r.log_sigma_min);
    }

    #[test]
    fn projections_sum_to_identity(d in 2usize..5, k in 1usize..4, seed in 0u64..1000) {
        prop_assume!(k < d);
        let l1: Subspace = sample_uniform(d, k, 1, seed).unwrap().remove(0);
        let l2: Subspace = sample_uniform(d, d - k, 1, seed + 1).unwrap().remove(0);
        let split = Splitting::new(l1, l2).unwrap();
        for i in 0..d {
            let v = DVector::from_fn(d, |r, _| if r == i { 1.0 } else { 0.0 });
            let sum = split.project_vector(&v, 1) + split.project_vector(&v, 2);
            prop_assert!((sum - v).norm() < 1e-10);
        }
    }

    #[test]
    fn bohl_exponents_are_ordered_monotone_and_shift(d in 2usize..4, seed in 0u64..1000, gamma in -1.5f64..1.5) {
        let sys = random(d, seed);
        let grid = WindowGrid::new(HORIZON);
        let v: Subspace = sample_uniform(d, 2, 1, seed).unwrap().remove(0);
        let u = sample_in(&v, 1, 1, seed + 7).unwrap().remove(0);
        let (up_v, lo_v) = (upper_bohl(&sys, &v, &grid).unwrap(), lower_bohl(&sys, &v, &grid).unwrap());
        let (up_u, lo_u) = (upper_bohl(&sys, &u, &grid).unwrap(), lower_bohl(&sys, &u, &grid).unwrap());
        prop_assert!(f(lo_v.value) <= f(up_v.value) + 1e-9);
        prop_assert!(f(lo_u.value) <= f(up_u.value) + 1e-9);
        prop_assert!(f(up_u.value) <= f(up_v.value) + 1e-9);
        prop_assert!(f(lo_u.value) >= f(lo_v.value) - 1e-9);
        for w in up_v.per_floor.windows(2) {
            prop_assert!(f(w[1].1) <= f(w[0].1));
        }
        for w in lo_v.per_floor.windows(2) {
            prop_assert!(f(w[1].1) >= f(w[0].1));
        }
        let shifted = upper_bohl(&sys.shifted(gamma), &v, &grid).unwrap();
        prop_assert!((f(shifted.value) - (f(up_v.value) - gamma)).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn filtration_is_increasing(seed in 0u64..1000) {
        let sys = make_random::<f64>(3, TimeDomain::TwoSided, HORIZON, 0.6, seed);
        let report = compute_spectrum(&sys, &j_ed(3), &WindowGrid::new(HORIZON), &cheap()).unwrap();
        for w in report.filtration.windows(2) {
            prop_assert!(w[0].dim <= w[1].dim);
            prop_assert!(w[1].basis.contains_tol(&w[0].basis, 1e-6), "dims {} {}", w[0].dim, w[1].dim);
        }
    }

    #[test]
    fn certified_splittings_are_transversal(d in 2usize..4, seed in 0u64..1000) {
        let k = 1;
        let (sys, stable) = make_split_random::<f64>(d, k, TimeDomain::TwoSided, HORIZON, 0.5, seed).unwrap();
        let l1 = Subspace::orthonormalize(&stable).unwrap();
        let split = Splitting::orthogonal(l1).unwrap();
        let grid = WindowGrid::new(HORIZON);
        let cfg = cheap();
        let cert = certify_dichotomy(&sys, 0.0, &split, (1, 1), &grid, &cfg).unwrap();
        if cert.verdict == Verdict::Holds {
            let ws = Workspace::new(&sys, &grid, cfg.search_points).unwrap();
            let up = ws.limiting_upper(k, 1, &cfg).unwrap();
            let lo = ws.limiting_lower(k, 1, &cfg).unwrap();
            let angles = principal_angles(&up.witness_l, &lo.witness_l).unwrap();
            prop_assert!(angles[0] > 1e-6, "smallest angle {}", angles[0]);
        }
    }

    #[test]
    fn uniformity_sups_grow_with_dimension(seed in 0u64..1000) {
        let (sys, stable) = make_split_random::<f64>(3, 2, TimeDomain::OneSided, HORIZON, 0.5, seed).unwrap();
        let split = Splitting::orthogonal(Subspace::orthonormalize(&stable).unwrap()).unwrap();
        if let Ok(mu) = maximal_uniformity(&sys, &split, &WindowGrid::new(HORIZON), &cheap()) {
            for w in mu.s1.windows(2) {
                prop_assert!(f(w[0]) <= f(w[1]) + 1e-9);
            }
            for w in mu.s2.windows(2) {
                prop_assert!(f(w[0]) >= f(w[1]) - 1e-9);
            }
        }
    }

    #[test]
    fn tail_constants_shrink_and_hold(d in 1usize..4, seed in 0u64..1000, m0 in 1usize..6, gamma in 0.0f64..0.25) {
        let (sys, _) = make_split_random::<f64>(d, 0, TimeDomain::OneSided, HORIZON, 0.5, seed).unwrap();
        let grid = WindowGrid::new(HORIZON);
        let u: Subspace = sample_uniform(d, 1, 1, seed).unwrap().remove(0);
        let c_tail = observed_tail_constant(&sys, gamma, &u, m0, &grid).unwrap();
        let global = tail_to_global_constant(&sys, gamma, &u, m0, c_tail, &empirical_bounds(&sys, HORIZON)).unwrap();
        prop_assert!(global <= c_tail);
        let check = check_d2(&sys, gamma, &u, &grid).unwrap();
        prop_assert!(check.holds && global <= check.constant * (1.0 + 1e-9));
    }
}
