//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed by a plain
//! `cargo test`. Criteria 1–7 and 9 are gated; criterion 8 compares solver
//! orderings on a Monte Carlo sweep and is reported without gating.
//! `--skip-sweep` runs criteria 1–7 only.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{array, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sgw_core::forward::WhitenedProblem;
use sgw_core::frame::{frame_bounds, quality_factor, FilterBank, KernelSpec, WaveletFrame};
use sgw_core::graph::{CorticalGraph, EdgeWeights, LaplacianSpectrum};
use sgw_core::io;
use sgw_core::mesh::generate_icosphere;
use sgw_core::metrics::{energy_map, spatial_dispersion, wasserstein1, EnergyMap, MetricsReport, PeakVertex};
use sgw_core::simulation::{run_sweep, Geometry, GeometryConfig, SweepConfig, SweepResult};
use sgw_core::solvers::{
    l1_objective, max_correlation, mne_gradient_residual, sbl_objective, sbl_update_champagne,
    sbl_update_em, sccd_objective, solve_mce, solve_mne, solve_sbl, solve_sgw_mne, solve_svbsccd,
    subgradient_residual, SblAlgorithm, SblState, SolverConfig,
};

/// Master seed of the benchmark sweep; distinct from the seed used when
/// choosing simulation defaults.
const SWEEP_SEED: u64 = 2026;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn randn(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn ico_spectrum(subdivisions: u32) -> (CorticalGraph, LaplacianSpectrum) {
    let mesh = generate_icosphere(subdivisions, 0.07).unwrap();
    let graph = CorticalGraph::from_mesh(&mesh, EdgeWeights::Binary);
    let spectrum = graph.eigendecompose(5000).unwrap();
    (graph, spectrum)
}

fn rel_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let num = (&a - &b).iter().map(|v| v * v).sum::<f64>().sqrt();
    let den = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    num / den
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (_, spectrum) = ico_spectrum(3);
    let spec = KernelSpec::design(spectrum.lambda_max, 16.0, 3).unwrap();
    let (a, b) = frame_bounds(&spectrum, &spec).unwrap();
    let q = quality_factor();
    let secs = start.elapsed().as_secs_f64();
    let (ra, rb) = (a.sqrt(), b.sqrt());
    let pass = spectrum.len() == 642
        && (ra - 0.71).abs() <= 0.15
        && (rb - 1.41).abs() <= 0.15
        && (q - 1.38).abs() <= 0.15
        && secs < 30.0;
    outcome(
        pass,
        format!("sqrt(A) = {ra:.4}, sqrt(B) = {rb:.4}, Q = {q:.4}, {secs:.1} s"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (_, spectrum) = ico_spectrum(3);
    let spec = KernelSpec::design(spectrum.lambda_max, 16.0, 3).unwrap();
    let frame = WaveletFrame::build(Arc::new(spectrum), &spec).unwrap();
    let dual = frame.dual().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = randn(frame.n_vertices(), 20, &mut rng);
    let back = frame.synthesize(dual.dot(&f).view()).unwrap();
    let worst = f
        .columns()
        .into_iter()
        .zip(back.columns())
        .map(|(a, b)| {
            let d = &a - &b;
            d.dot(&d).sqrt() / a.dot(&a).sqrt()
        })
        .fold(0.0f64, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-10 && secs < 30.0,
        format!("worst relative error {worst:.2e} over 20 signals, {secs:.1} s"),
    )
}

/// `h = cos θ(λ)` and band-pass filters sharing `sin θ(λ)`, so `G(λ) ≡ 1`.
struct ParsevalBank {
    lambda_max: f64,
    n_scales: usize,
}

impl ParsevalBank {
    fn theta(&self, lambda: f64) -> f64 {
        std::f64::consts::FRAC_PI_2 * (lambda / self.lambda_max).clamp(0.0, 1.0)
    }
}

impl FilterBank for ParsevalBank {
    fn n_scales(&self) -> usize {
        self.n_scales
    }

    fn low_pass(&self, lambda: f64) -> f64 {
        self.theta(lambda).cos()
    }

    fn band_pass(&self, lambda: f64, j: usize) -> f64 {
        let w = (j + 1) as f64 / (self.n_scales * (self.n_scales + 1) / 2) as f64;
        self.theta(lambda).sin() * w.sqrt()
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_residual = 0.0f64;
    for _ in 0..10 {
        let g = randn(20, 200, &mut rng);
        let z = randn(20, 5, &mut rng);
        let lambda = rng.random_range(0.01..10.0);
        let problem = WhitenedProblem::spatial(g.clone(), z.clone()).unwrap();
        let est = solve_mne(&problem, lambda).unwrap();
        worst_residual = worst_residual.max(mne_gradient_residual(g.view(), z.view(), est.sources.view(), lambda));
    }
    let (_, spectrum) = ico_spectrum(1);
    let n = spectrum.len();
    let bank = ParsevalBank {
        lambda_max: spectrum.lambda_max,
        n_scales: 3,
    };
    let frame = WaveletFrame::build(Arc::new(spectrum), &bank).unwrap();
    let g = randn(15, n, &mut rng);
    let z = randn(15, 4, &mut rng);
    let mut problem = WhitenedProblem::spatial(g.clone(), z).unwrap();
    problem.wavelet_gain = Some(Arc::new(g.dot(&frame.matrix().t())));
    let lambda = 0.5;
    let spatial = solve_mne(&problem, lambda).unwrap();
    let wavelet = solve_sgw_mne(&problem, &frame, lambda).unwrap();
    let gap = rel_diff(wavelet.sources.view(), spatial.sources.view());
    outcome(
        worst_residual < 1e-8 && gap < 1e-8,
        format!("worst first-order residual {worst_residual:.2e}, tight-frame sgw-MNE vs MNE {gap:.2e}"),
    )
}

/// Cyclic coordinate descent for `½‖z − G s‖² + λ‖s‖₁`, one time sample.
fn lasso_cd(g: ArrayView2<f64>, z: &Array1<f64>, lambda: f64) -> Array1<f64> {
    let n = g.ncols();
    let mut s = Array1::<f64>::zeros(n);
    let mut r = z.clone();
    let col_sq: Vec<f64> = g.columns().into_iter().map(|c| c.dot(&c)).collect();
    for _ in 0..200_000 {
        let mut moved = 0.0f64;
        for k in 0..n {
            let col = g.column(k);
            let rho = col.dot(&r) + col_sq[k] * s[k];
            let next = rho.signum() * (rho.abs() - lambda).max(0.0) / col_sq[k];
            let delta = next - s[k];
            if delta != 0.0 {
                r.scaled_add(-delta, &col);
                s[k] = next;
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    s
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = SolverConfig {
        max_iters: 5000,
        tol_abs: Some(1e-6),
        ..SolverConfig::default()
    };
    let mut worst_residual = 0.0f64;
    let mut worst_iters = 0usize;
    for _ in 0..10 {
        let g = randn(20, 200, &mut rng) / 20f64.sqrt();
        let z = randn(20, 5, &mut rng);
        let lambda = 0.2 * max_correlation(g.view(), z.view());
        let problem = WhitenedProblem::spatial(g.clone(), z.clone()).unwrap();
        let est = solve_mce(&problem, lambda, &config).unwrap();
        worst_residual = worst_residual.max(subgradient_residual(g.view(), z.view(), est.sources.view(), lambda));
        worst_iters = worst_iters.max(est.iterations);
    }
    let mut worst_gap = 0.0f64;
    for _ in 0..10 {
        let g = randn(4, 6, &mut rng);
        let z = randn(4, 1, &mut rng);
        let lambda = 0.3 * max_correlation(g.view(), z.view());
        let problem = WhitenedProblem::spatial(g.clone(), z.clone()).unwrap();
        let tight = SolverConfig {
            max_iters: 100_000,
            tol_abs: Some(1e-13),
            ..SolverConfig::default()
        };
        let est = solve_mce(&problem, lambda, &tight).unwrap();
        let oracle = lasso_cd(g.view(), &z.column(0).to_owned(), lambda).insert_axis(ndarray::Axis(1));
        let ours = l1_objective(g.view(), z.view(), est.sources.view(), lambda);
        let theirs = l1_objective(g.view(), z.view(), oracle.view(), lambda);
        worst_gap = worst_gap.max((ours - theirs).abs());
    }
    outcome(
        worst_residual < 1e-4 && worst_iters <= 5000 && worst_gap < 1e-8,
        format!(
            "worst residual {worst_residual:.2e} in <= {worst_iters} iterations, \
             objective gap to coordinate descent {worst_gap:.2e}"
        ),
    )
}

/// Minimizes a convex function of two variables by shrinking grid search.
fn grid_minimize(f: impl Fn(f64, f64) -> f64, mut center: (f64, f64), mut half: f64) -> (f64, f64) {
    const STEPS: i32 = 40;
    while half > 1e-9 {
        let mut best = (f64::INFINITY, center);
        for i in -STEPS..=STEPS {
            for k in -STEPS..=STEPS {
                let p = (
                    center.0 + half * i as f64 / STEPS as f64,
                    center.1 + half * k as f64 / STEPS as f64,
                );
                let v = f(p.0, p.1);
                if v < best.0 {
                    best = (v, p);
                }
            }
        }
        center = best.1;
        half *= 0.25;
    }
    center
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = SolverConfig {
        max_iters: 100_000,
        tol_rel: 1e-12,
        tol_abs: Some(1e-12),
        ..SolverConfig::default()
    };
    let (graph, _) = ico_spectrum(1);
    let n = graph.n_vertices();
    let mut worst_mce = 0.0f64;
    for _ in 0..5 {
        let g = randn(10, n, &mut rng) / 10f64.sqrt();
        let z = randn(10, 3, &mut rng);
        let mu = 0.2 * max_correlation(g.view(), z.view());
        let problem = WhitenedProblem::spatial(g, z).unwrap();
        let mce = solve_mce(&problem, mu, &config).unwrap();
        let sccd = solve_svbsccd(&problem, &graph, 0.0, mu, &config).unwrap();
        worst_mce = worst_mce.max(rel_diff(sccd.sources.view(), mce.sources.view()));
    }
    let pair = CorticalGraph::from_edges(2, &[(0, 1)], EdgeWeights::Binary).unwrap();
    let mut worst_grid = 0.0f64;
    for _ in 0..5 {
        let g = randn(3, 2, &mut rng);
        let z = randn(3, 1, &mut rng);
        let lambda = rng.random_range(0.05..1.0);
        let mu = rng.random_range(0.05..1.0);
        let problem = WhitenedProblem::spatial(g.clone(), z.clone()).unwrap();
        let est = solve_svbsccd(&problem, &pair, lambda, mu, &config).unwrap();
        let objective = |a: f64, b: f64| {
            let s = array![[a], [b]];
            sccd_objective(g.view(), z.view(), pair.gradient(), s.view(), lambda, mu)
        };
        let (a, b) = grid_minimize(objective, (0.0, 0.0), 20.0);
        let err = (est.sources[[0, 0]] - a).abs().max((est.sources[[1, 0]] - b).abs());
        worst_grid = worst_grid.max(err);
    }
    outcome(
        worst_mce < 1e-6 && worst_grid < 1e-4,
        format!("lambda = 0 vs MCE {worst_mce:.2e}, two-variable vs grid search {worst_grid:.2e}"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_rise = f64::NEG_INFINITY;
    for instance in 0..100 {
        let j = rng.random_range(3..10);
        let n = rng.random_range(j..3 * j);
        let g = randn(j, n, &mut rng);
        let z = randn(j, rng.random_range(1..6), &mut rng);
        let gamma = Array1::from_shape_fn(n, |_| rng.random_range(0.01..2.0));
        let mut state = SblState::new(g.view(), z.view(), gamma).unwrap();
        for _ in 0..50 {
            let next = if instance % 2 == 0 {
                sbl_update_em(&state, g.view()).unwrap()
            } else {
                sbl_update_champagne(&state, g.view()).unwrap()
            };
            let before = sbl_objective(&state).unwrap();
            let after = sbl_objective(&next).unwrap();
            worst_rise = worst_rise.max((after - before) / before.abs().max(1.0));
            state = next;
        }
    }

    // identity leadfield: c_n = ‖Z_n‖²/L, kept away from the threshold 1
    let n = 12;
    let l = 8;
    let mut z = randn(n, l, &mut rng);
    let mut c = Array1::zeros(n);
    for (k, mut row) in z.rows_mut().into_iter().enumerate() {
        let target = if k % 3 == 0 { 0.4 } else { rng.random_range(1.5..6.0) };
        let norm = row.dot(&row) / l as f64;
        row *= (target / norm).sqrt();
        c[k] = target;
    }
    let eye = Array2::eye(n);
    let mut state = SblState::new(eye.view(), z.view(), Array1::ones(n)).unwrap();
    for _ in 0..2000 {
        state = sbl_update_champagne(&state, eye.view()).unwrap();
    }
    let expected = c.mapv(|v: f64| (v - 1.0).max(0.0));
    let fixed_err = (&state.gamma - &expected).iter().fold(0.0f64, |m, v| m.max(v.abs()));

    // EM shrinks vanishing variances only sublinearly, so exact zeros are
    // checked on the Champagne path; EM's count is reported.
    let config = SolverConfig {
        max_iters: 20_000,
        ..SolverConfig::default()
    };
    let mut supports = [0usize; 2];
    for (slot, algorithm) in [SblAlgorithm::Champagne, SblAlgorithm::Em].into_iter().enumerate() {
        for _ in 0..5 {
            let g = randn(8, 40, &mut rng);
            let x = Array2::from_shape_fn((40, 6), |(k, _)| if k % 13 == 0 { 3.0 } else { 0.0 });
            let z = g.dot(&x) + randn(8, 6, &mut rng) * 0.1;
            let problem = WhitenedProblem::spatial(g, z).unwrap();
            let est = solve_sbl(&problem, 0.1, &config, algorithm).unwrap();
            supports[slot] = supports[slot].max(est.support_size());
        }
    }
    let support_ok = supports[0] <= 8;
    outcome(
        worst_rise <= 1e-10 && fixed_err < 1e-6 && support_ok,
        format!(
            "largest relative objective rise {worst_rise:.2e}, identity fixed point error {fixed_err:.2e}, \
             largest Champagne support {} (J = 8, EM {})",
            supports[0], supports[1]
        ),
    )
}

fn criterion_7() -> Outcome {
    let mesh = generate_icosphere(2, 0.07).unwrap();
    let distances = mesh.vertex_distances();
    let n = mesh.n_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut point = Array2::zeros((n, 3));
    point[[17, 1]] = 2.5;
    let sd = spatial_dispersion(point.view(), 1, distances.view(), PeakVertex::Estimate).unwrap();

    let random_map = |rng: &mut ChaCha8Rng| {
        let s = randn(n, 4, rng).mapv(|v| if v > 1.0 { v } else { 0.0 });
        energy_map(s.view(), (0, 3), true).unwrap()
    };
    let dirac = |k: usize| {
        let mut values = Array1::zeros(n);
        values[k] = 1.0;
        EnergyMap {
            values,
            window: (0, 0),
            normalized: true,
        }
    };
    let mu = random_map(&mut rng);
    let self_dist = wasserstein1(&mu, &mu, distances.view()).unwrap();
    let mut point_err = 0.0f64;
    for _ in 0..20 {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let w = wasserstein1(&dirac(a), &dirac(b), distances.view()).unwrap();
        point_err = point_err.max((w - distances[[a, b]]).abs());
    }
    let mut worst_asym = 0.0f64;
    let mut worst_triangle = f64::NEG_INFINITY;
    for _ in 0..50 {
        let (a, b, c) = (random_map(&mut rng), random_map(&mut rng), random_map(&mut rng));
        let ab = wasserstein1(&a, &b, distances.view()).unwrap();
        let ba = wasserstein1(&b, &a, distances.view()).unwrap();
        let bc = wasserstein1(&b, &c, distances.view()).unwrap();
        let ac = wasserstein1(&a, &c, distances.view()).unwrap();
        worst_asym = worst_asym.max((ab - ba).abs());
        worst_triangle = worst_triangle.max(ac - ab - bc);
    }
    outcome(
        sd == 0.0 && self_dist.abs() < 1e-12 && point_err < 1e-8 && worst_asym < 1e-10 && worst_triangle <= 1e-10,
        format!(
            "point SD {sd:.1e}, W1(mu, mu) {self_dist:.1e}, point-mass error {point_err:.1e}, \
             asymmetry {worst_asym:.1e}, triangle excess {worst_triangle:.1e}"
        ),
    )
}

fn sweep_single_thread(geometry: &Geometry, config: &SweepConfig) -> SweepResult {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| run_sweep(geometry, config, SWEEP_SEED, |_| Ok(())).unwrap())
}

fn median(report: &MetricsReport, solver: &str, size: usize, metric: &str) -> f64 {
    let group = report.group(solver, size).expect("solver group present");
    let summary = match metric {
        "sd" => &group.sd_ratio,
        "w1" => &group.wasserstein1,
        _ => &group.l2_ratio,
    };
    summary.as_ref().map_or(f64::NAN, |s| s.median)
}

fn criterion_8(report: &MetricsReport, secs: f64) -> Outcome {
    let m = |solver, size, metric| median(report, solver, size, metric);
    let solvers = ["MNE", "MCE", "sVB-SCCD", "sgw-SBL"];
    let w1_large_best = solvers[..3].iter().all(|s| m("sgw-SBL", 100, "w1") < m(s, 100, "w1"));
    let checks = [
        (
            "large SD: sgw-SBL < MCE, MNE",
            m("sgw-SBL", 100, "sd") < m("MCE", 100, "sd") && m("sgw-SBL", 100, "sd") < m("MNE", 100, "sd"),
        ),
        ("large W1: sgw-SBL smallest", w1_large_best),
        ("small W1: MCE <= sgw-SBL", m("MCE", 10, "w1") <= m("sgw-SBL", 10, "w1")),
        ("l2: MNE < 0.2 at both sizes", m("MNE", 10, "l2") < 0.2 && m("MNE", 100, "l2") < 0.2),
        ("l2: MCE > 1.5 on large", m("MCE", 100, "l2") > 1.5),
        ("l2: sgw-SBL <= 1 at both sizes", m("sgw-SBL", 10, "l2") <= 1.0 && m("sgw-SBL", 100, "l2") <= 1.0),
    ];
    for size in [10, 100] {
        println!("    size {size:>3} medians (SD ratio / W1 mm / l2 ratio):");
        for s in solvers {
            println!(
                "      {s:<9} {:>8.3} {:>8.2} {:>8.3}",
                m(s, size, "sd"),
                m(s, size, "w1") * 1e3,
                m(s, size, "l2")
            );
        }
    }
    for (name, ok) in &checks {
        println!("    [{}] {name}", if *ok { "ok" } else { "--" });
    }
    let held = checks.iter().filter(|c| c.1).count();
    outcome(
        held == checks.len(),
        format!("{held} of {} orderings hold, sweep {secs:.0} s", checks.len()),
    )
}

fn report_line(n: usize, o: &Outcome) {
    println!("criterion {n}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let quick: [(usize, fn() -> Outcome); 7] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
    ];
    let mut gated_failures = Vec::new();
    for (n, run) in quick {
        let o = run();
        report_line(n, &o);
        if !o.pass {
            gated_failures.push(n);
        }
    }

    if std::env::args().any(|a| a == "--skip-sweep") {
        println!("criterion 8: SKIPPED (--skip-sweep)");
        println!("criterion 9: SKIPPED (--skip-sweep)");
    } else {
        run_sweep_criteria(&mut gated_failures);
    }
    if !gated_failures.is_empty() {
        eprintln!("gated criteria failed: {gated_failures:?}");
        std::process::exit(1);
    }
}

/// Criteria 8 and 9: the benchmark sweep, run twice on one thread.
fn run_sweep_criteria(gated_failures: &mut Vec<usize>) {
    let geometry = Geometry::build(&GeometryConfig::default()).unwrap();
    let config = SweepConfig::default();
    let start = Instant::now();
    let first = sweep_single_thread(&geometry, &config);
    let secs = start.elapsed().as_secs_f64();
    let report = MetricsReport::from_records(&first.records);
    let expected_records = config.sizes.len() * config.n_patches * config.solvers.len();
    let c8 = criterion_8(&report, secs);
    report_line(8, &c8);
    if first.records.len() + first.failures.len() != expected_records {
        println!("    {} records and {} failures, expected {expected_records} results", first.records.len(), first.failures.len());
    }

    let dir = tempfile::tempdir().unwrap();
    let second = sweep_single_thread(&geometry, &config);
    let a = dir.path().join("first.csv");
    let b = dir.path().join("second.csv");
    io::write_records(&a, &first.records).unwrap();
    io::write_records(&b, &second.records).unwrap();
    let identical = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap() && !first.records.is_empty();
    let c9 = outcome(
        identical,
        format!("{} records, metric CSVs bit-identical: {identical}", first.records.len()),
    );
    report_line(9, &c9);
    if !c9.pass {
        gated_failures.push(9);
    }
}
