use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sgw_core::forward::WhitenedProblem;
use sgw_core::graph::{CorticalGraph, EdgeWeights};
use sgw_core::linalg::sym_eigh;
use sgw_core::mesh::generate_icosphere;
use sgw_core::solvers::{
    l1_objective, max_correlation, mne_gradient_residual, sbl_objective, sbl_update_champagne, sbl_update_em,
    sccd_objective, solve_mce, solve_mne, solve_svbsccd, SblState, SolverConfig,
};

fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn max_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Random `J × N` gain and `J × L` data.
fn instance(seed: u64, j: usize, n: usize, l: usize) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (randn(j, n, &mut rng) / (j as f64).sqrt(), randn(j, l, &mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mne_is_linear_and_optimal(seed in any::<u64>(), lambda in 1e-3f64..10.0, a in -3.0f64..3.0) {
        let (g, z1) = instance(seed, 8, 30, 3);
        let (_, z2) = instance(seed ^ 1, 8, 30, 3);
        let solve = |z: &Array2<f64>| {
            solve_mne(&WhitenedProblem::spatial(g.clone(), z.clone()).unwrap(), lambda).unwrap().sources
        };
        let (s1, s2) = (solve(&z1), solve(&z2));
        let combined = solve(&(&z1 * a + &z2));
        let scale = max_abs(&combined).max(1e-12);
        prop_assert!(max_abs(&(combined - (&s1 * a + &s2))) <= 1e-10 * scale.max(max_abs(&s1)));
        prop_assert!(mne_gradient_residual(g.view(), z1.view(), s1.view(), lambda) < 1e-10);
    }

    #[test]
    fn mce_beats_zero_and_mne(seed in any::<u64>(), frac in 0.05f64..0.9) {
        let (g, z) = instance(seed, 10, 40, 2);
        let lambda = frac * max_correlation(g.view(), z.view());
        let problem = WhitenedProblem::spatial(g.clone(), z.clone()).unwrap();
        let cfg = SolverConfig { max_iters: 5000, ..SolverConfig::default() };
        let mce = solve_mce(&problem, lambda, &cfg).unwrap();
        let mne = solve_mne(&problem, lambda).unwrap();
        let f = |s: &Array2<f64>| l1_objective(g.view(), z.view(), s.view(), lambda);
        let ours = f(&mce.sources);
        prop_assert!(ours <= f(&Array2::zeros((40, 2))) + 1e-12);
        prop_assert!(ours <= f(&mne.sources) + 1e-9 * ours.abs());
        prop_assert!(mce.objective_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15));
    }

    #[test]
    fn mce_is_zero_above_critical_weight(seed in any::<u64>(), over in 1.0f64..5.0) {
        let (g, z) = instance(seed, 6, 20, 2);
        let lambda = over * max_correlation(g.view(), z.view());
        let est = solve_mce(&WhitenedProblem::spatial(g, z).unwrap(), lambda, &SolverConfig::default()).unwrap();
        prop_assert_eq!(est.support_size(), 0);
    }

    #[test]
    fn sccd_beats_zero_and_mce(seed in any::<u64>(), frac in 0.05f64..0.5) {
        let graph = CorticalGraph::from_mesh(&generate_icosphere(1, 0.07).unwrap(), EdgeWeights::Binary);
        let (g, z) = instance(seed, 10, 42, 2);
        let w = frac * max_correlation(g.view(), z.view());
        let problem = WhitenedProblem::spatial(g.clone(), z.clone()).unwrap();
        let cfg = SolverConfig { max_iters: 20_000, tol_rel: 1e-9, ..SolverConfig::default() };
        let est = solve_svbsccd(&problem, &graph, w, w, &cfg).unwrap();
        let mce = solve_mce(&problem, w, &cfg).unwrap();
        let f = |s: &Array2<f64>| sccd_objective(g.view(), z.view(), graph.gradient(), s.view(), w, w);
        let ours = f(&est.sources);
        prop_assert!(ours <= f(&Array2::zeros((42, 2))) + 1e-12);
        prop_assert!(ours <= f(&mce.sources) + 1e-6 * ours.abs());
    }

    #[test]
    fn sbl_updates_descend_and_stay_valid(seed in any::<u64>(), em in any::<bool>()) {
        let (g, z) = instance(seed, 6, 15, 4);
        let mut state = SblState::new(g.view(), z.view(), Array1::ones(15)).unwrap();
        for _ in 0..40 {
            let next = if em {
                sbl_update_em(&state, g.view()).unwrap()
            } else {
                sbl_update_champagne(&state, g.view()).unwrap()
            };
            let (before, after) = (sbl_objective(&state).unwrap(), sbl_objective(&next).unwrap());
            prop_assert!(after <= before + 1e-10 * before.abs().max(1.0));
            prop_assert!(next.gamma.iter().all(|&v| v >= 0.0 && v.is_finite()));
            let (eig, _) = sym_eigh(next.sigma_z.view()).unwrap();
            prop_assert!(eig[0] >= 1.0 - 1e-12);
            state = next;
        }
    }

    #[test]
    fn sbl_updates_are_covariant_under_column_scaling(
        seed in any::<u64>(),
        em in any::<bool>(),
        scales in proptest::collection::vec(0.1f64..10.0, 12),
    ) {
        let (g, z) = instance(seed, 5, 12, 3);
        let c = Array1::from(scales);
        let scaled = &g * &c;
        let mut a = SblState::new(g.view(), z.view(), Array1::ones(12)).unwrap();
        let mut b = SblState::new(scaled.view(), z.view(), c.mapv(|v| 1.0 / (v * v))).unwrap();
        for _ in 0..10 {
            let step = |s: &SblState, gain: &Array2<f64>| {
                if em { sbl_update_em(s, gain.view()) } else { sbl_update_champagne(s, gain.view()) }.unwrap()
            };
            a = step(&a, &g);
            b = step(&b, &scaled);
        }
        let back = &b.gamma * &c.mapv(|v| v * v);
        for (x, y) in back.iter().zip(a.gamma.iter()) {
            prop_assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-12));
        }
    }
}
