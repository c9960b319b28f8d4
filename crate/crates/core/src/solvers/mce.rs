use ndarray::{Array2, ArrayView2, Zip};

use super::{check_frame, data_misfit, max_correlation, wavelet_gain, SolverConfig, SourceEstimate};
use crate::error::{Error, Result};
use crate::forward::WhitenedProblem;
use crate::frame::WaveletFrame;
use crate::linalg::spectral_norm_sq;

/// Power-iteration estimates approach ‖G‖² from below; the step uses an
/// inflated Lipschitz constant so the descent lemma holds.
pub(crate) const LIPSCHITZ_INFLATION: f64 = 1.0 + 1e-3;
const POWER_TOL: f64 = 1e-6;
const POWER_ITERS: usize = 10_000;
const KKT_CHECK_EVERY: usize = 10;

/// `½‖Z − G S‖² + λ‖S‖₁`.
pub fn l1_objective(gain: ArrayView2<f64>, data: ArrayView2<f64>, s: ArrayView2<f64>, lambda: f64) -> f64 {
    data_misfit(gain, data, s) + lambda * l1_norm(s)
}

/// `max_kl dist(−[Gᵀ(G S − Z)]_kl, λ ∂|S_kl|)`, zero exactly at minimizers.
pub fn subgradient_residual(
    gain: ArrayView2<f64>,
    data: ArrayView2<f64>,
    s: ArrayView2<f64>,
    lambda: f64,
) -> f64 {
    let grad = gain.t().dot(&(&gain.dot(&s) - &data));
    kkt_residual(grad.view(), s, lambda)
}

pub(crate) fn l1_norm(s: ArrayView2<f64>) -> f64 {
    s.iter().map(|v| v.abs()).sum()
}

pub(crate) fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn kkt_residual(grad: ArrayView2<f64>, s: ArrayView2<f64>, lambda: f64) -> f64 {
    let mut r = 0.0f64;
    Zip::from(grad).and(s).for_each(|&g, &x| {
        let d = if x > 0.0 {
            (g + lambda).abs()
        } else if x < 0.0 {
            (g - lambda).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        r = r.max(d);
    });
    r
}

pub(crate) fn lipschitz(gain: ArrayView2<f64>) -> f64 {
    spectral_norm_sq(gain, POWER_TOL, POWER_ITERS) * LIPSCHITZ_INFLATION
}

pub(crate) struct L1Solution {
    pub x: Array2<f64>,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// FISTA on `½‖Z − G X‖² + λ‖X‖₁`. A step that would increase the objective
/// is discarded and the momentum reset, so the accepted objective sequence
/// is monotone.
pub(crate) fn fista(
    gain: ArrayView2<f64>,
    data: ArrayView2<f64>,
    lambda: f64,
    config: &SolverConfig,
) -> Result<L1Solution> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("lambda must be nonnegative, got {lambda}")));
    }
    config.validate()?;
    if gain.nrows() != data.nrows() {
        return Err(Error::dims("gain and data row counts differ"));
    }
    let n = gain.ncols();
    let l = data.ncols();
    let tol = config
        .tol_abs
        .unwrap_or_else(|| config.tol_rel * max_correlation(gain, data).max(f64::MIN_POSITIVE));

    let mut x = Array2::<f64>::zeros((n, l));
    let mut gx = Array2::<f64>::zeros(data.raw_dim());
    let mut f_x = 0.5 * data.iter().map(|v| v * v).sum::<f64>();
    let mut trace = vec![f_x];

    let initial_grad = gain.t().dot(&(-&data));
    if kkt_residual(initial_grad.view(), x.view(), lambda) <= tol {
        return Ok(L1Solution {
            x,
            iterations: 0,
            objective: f_x,
            converged: true,
            trace,
        });
    }

    let lip = lipschitz(gain);
    if lip == 0.0 {
        return Ok(L1Solution {
            x,
            iterations: 0,
            objective: f_x,
            converged: true,
            trace,
        });
    }
    let step = 1.0 / lip;

    let mut y = x.clone();
    let mut gy = gx.clone();
    let mut theta = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=config.max_iters {
        iterations = it;
        let grad = gain.t().dot(&(&gy - &data));
        let mut z = &y - &(grad * step);
        z.mapv_inplace(|v| soft_threshold(v, step * lambda));
        let gz = gain.dot(&z);
        let f_z = 0.5 * Zip::from(&data).and(&gz).fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b))
            + lambda * l1_norm(z.view());

        if f_z > f_x && theta > 1.0 {
            // restart from the last accepted point with a plain gradient step
            theta = 1.0;
            y.assign(&x);
            gy.assign(&gx);
            trace.push(f_x);
            continue;
        }

        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        if f_z <= f_x {
            y = &z + &((&z - &x) * beta);
            gy = &gz + &((&gz - &gx) * beta);
            x = z;
            gx = gz;
            f_x = f_z;
        } else {
            // numerical noise at the optimum after a restart
            y.assign(&x);
            gy.assign(&gx);
        }
        theta = theta_next;
        trace.push(f_x);

        if it % KKT_CHECK_EVERY == 0 || it == config.max_iters {
            let g = gain.t().dot(&(&gx - &data));
            if kkt_residual(g.view(), x.view(), lambda) <= tol {
                converged = true;
                break;
            }
        }
    }

    Ok(L1Solution {
        x,
        iterations,
        objective: f_x,
        converged,
        trace,
    })
}

fn estimate(
    solver: &str,
    sol: L1Solution,
    sources: Array2<f64>,
    coefficients: Option<Array2<f64>>,
    lambda: f64,
) -> SourceEstimate {
    if !sol.converged {
        log::info!("{solver}: no convergence after {} iterations", sol.iterations);
    }
    SourceEstimate {
        sources,
        coefficients,
        solver: solver.to_string(),
        lambda,
        iterations: sol.iterations,
        objective: sol.objective,
        converged: sol.converged,
        objective_trace: sol.trace,
    }
}

/// Minimum-current estimate.
pub fn solve_mce(problem: &WhitenedProblem, lambda: f64, config: &SolverConfig) -> Result<SourceEstimate> {
    let sol = fista(problem.gain.view(), problem.data.view(), lambda, config)?;
    let s = sol.x.clone();
    Ok(estimate("MCE", sol, s, None, lambda))
}

/// Minimum-current estimate over wavelet coefficients.
pub fn solve_sgw_mce(
    problem: &WhitenedProblem,
    frame: &WaveletFrame,
    lambda: f64,
    config: &SolverConfig,
) -> Result<SourceEstimate> {
    check_frame(problem, frame)?;
    let sol = fista(wavelet_gain(problem)?.view(), problem.data.view(), lambda, config)?;
    let s = frame.synthesize(sol.x.view())?;
    let x = sol.x.clone();
    Ok(estimate("sgw-MCE", sol, s, Some(x), lambda))
}
