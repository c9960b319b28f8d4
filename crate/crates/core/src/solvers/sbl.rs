use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::mne::{solve_mne, solve_sgw_mne};
use super::{check_frame, wavelet_gain, SolverConfig, SourceEstimate};
use crate::error::{Error, Result};
use crate::forward::WhitenedProblem;
use crate::frame::WaveletFrame;
use crate::linalg::SpdFactor;

/// Slack allowed on the objective when a pruning step is accepted.
const PRUNE_SLACK: f64 = 1e-10;

/// Variance update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum SblAlgorithm {
    /// Expectation-maximization: `γ ← γ² q + γ − γ² z`.
    Em,
    /// Convex bounding: `γ ← γ √(q / z)`.
    Champagne,
}

/// Hyper-parameters `γ` with the induced data covariance
/// `Σ_Z = I + G Γ Gᵀ` and the sample covariance `C_Z = Z Zᵀ / L`.
#[derive(Debug, Clone)]
pub struct SblState {
    pub gamma: Array1<f64>,
    pub sigma_z: Array2<f64>,
    pub c_z: Array2<f64>,
    /// `tr(C_Z Σ_Z⁻¹) + ln det Σ_Z` at `gamma`.
    pub objective: f64,
    pub objective_trace: Vec<f64>,
}

fn active_set(gamma: &Array1<f64>) -> Vec<usize> {
    gamma
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > 0.0)
        .map(|(i, _)| i)
        .collect()
}

fn sigma_of(gain: ArrayView2<f64>, gamma: &Array1<f64>, active: &[usize]) -> Array2<f64> {
    let ga = gain.select(Axis(1), active);
    let mut scaled = ga.clone();
    for (mut col, &n) in scaled.columns_mut().into_iter().zip(active) {
        col *= gamma[n];
    }
    let mut sigma = scaled.dot(&ga.t());
    sigma.diag_mut().mapv_inplace(|v| v + 1.0);
    // exact symmetry for the factorization
    let s = (&sigma + &sigma.t()) * 0.5;
    s
}

fn evaluate(c_z: &Array2<f64>, sigma: &Array2<f64>) -> Result<(f64, SpdFactor)> {
    let factor = SpdFactor::new(sigma.view())
        .map_err(|_| Error::Numerical("Σ_Z lost positive definiteness".into()))?;
    let trace = factor.solve(c_z.view()).diag().sum();
    Ok((trace + factor.ln_det(), factor))
}

impl SblState {
    pub fn new(gain: ArrayView2<f64>, data: ArrayView2<f64>, gamma: Array1<f64>) -> Result<Self> {
        if gain.nrows() != data.nrows() || gain.ncols() != gamma.len() {
            return Err(Error::dims(format!(
                "gain {}×{}, data {} rows, {} variances",
                gain.nrows(),
                gain.ncols(),
                data.nrows(),
                gamma.len()
            )));
        }
        if gamma.iter().any(|&g| !(g >= 0.0 && g.is_finite())) {
            return Err(Error::param("variances must be finite and nonnegative"));
        }
        let l = data.ncols().max(1) as f64;
        let c_z = data.dot(&data.t()) / l;
        Self::from_parts(gain, c_z, gamma, Vec::new())
    }

    fn from_parts(
        gain: ArrayView2<f64>,
        c_z: Array2<f64>,
        gamma: Array1<f64>,
        mut objective_trace: Vec<f64>,
    ) -> Result<Self> {
        let sigma_z = sigma_of(gain, &gamma, &active_set(&gamma));
        let (objective, _) = evaluate(&c_z, &sigma_z)?;
        objective_trace.push(objective);
        Ok(SblState {
            gamma,
            sigma_z,
            c_z,
            objective,
            objective_trace,
        })
    }

    fn with_gamma(&self, gain: ArrayView2<f64>, gamma: Array1<f64>) -> Result<Self> {
        Self::from_parts(gain, self.c_z.clone(), gamma, self.objective_trace.clone())
    }

    /// Indices with `γ_n > 0`.
    pub fn support(&self) -> Vec<usize> {
        active_set(&self.gamma)
    }

    /// Posterior mean `Γ Gᵀ Σ_Z⁻¹ Z`.
    pub fn posterior_mean(&self, gain: ArrayView2<f64>, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        let factor = SpdFactor::new(self.sigma_z.view())
            .map_err(|_| Error::Numerical("Σ_Z lost positive definiteness".into()))?;
        let w = factor.solve(data);
        let mut x = Array2::zeros((gain.ncols(), data.ncols()));
        for n in self.support() {
            let row = gain.column(n).dot(&w) * self.gamma[n];
            x.row_mut(n).assign(&row);
        }
        Ok(x)
    }

    /// `z_n = g_nᵀ Σ⁻¹ g_n` and `q_n = g_nᵀ Σ⁻¹ C_Z Σ⁻¹ g_n` on the support.
    fn moments(&self, gain: ArrayView2<f64>, active: &[usize]) -> Result<(Array1<f64>, Array1<f64>)> {
        let factor = SpdFactor::new(self.sigma_z.view())
            .map_err(|_| Error::Numerical("Σ_Z lost positive definiteness".into()))?;
        let ga = gain.select(Axis(1), active);
        let m = factor.solve(ga.view());
        let cm = self.c_z.dot(&m);
        let z = Zip::from(ga.columns()).and(m.columns()).map_collect(|a, b| a.dot(&b));
        let q = Zip::from(m.columns()).and(cm.columns()).map_collect(|a, b| a.dot(&b));
        Ok((z, q))
    }
}

/// `tr(C_Z Σ_Z⁻¹) + ln det Σ_Z`, recomputed from a Cholesky factor.
pub fn sbl_objective(state: &SblState) -> Result<f64> {
    Ok(evaluate(&state.c_z, &state.sigma_z)?.0)
}

fn update(state: &SblState, gain: ArrayView2<f64>, algorithm: SblAlgorithm) -> Result<Array1<f64>> {
    let active = state.support();
    let mut gamma = Array1::zeros(state.gamma.len());
    if active.is_empty() {
        return Ok(gamma);
    }
    let (z, q) = state.moments(gain, &active)?;
    for (i, &n) in active.iter().enumerate() {
        let g = state.gamma[n];
        let next = match algorithm {
            SblAlgorithm::Em => g * g * q[i] + g - g * g * z[i],
            SblAlgorithm::Champagne => {
                if z[i] > 0.0 {
                    g * (q[i].max(0.0) / z[i]).sqrt()
                } else {
                    0.0
                }
            }
        };
        gamma[n] = next.max(0.0);
    }
    Ok(gamma)
}

/// One EM step on the variances.
pub fn sbl_update_em(state: &SblState, gain: ArrayView2<f64>) -> Result<SblState> {
    let gamma = update(state, gain, SblAlgorithm::Em)?;
    state.with_gamma(gain, gamma)
}

/// One convex-bounding (Champagne) step on the variances.
pub fn sbl_update_champagne(state: &SblState, gain: ArrayView2<f64>) -> Result<SblState> {
    let gamma = update(state, gain, SblAlgorithm::Champagne)?;
    state.with_gamma(gain, gamma)
}

/// Effective variances `γ_n ‖g_n‖²`, the contribution of each atom to
/// `Σ_Z`. Unlike `γ` they do not depend on column scaling.
fn effective(gamma: &Array1<f64>, col_sq: &Array1<f64>) -> Array1<f64> {
    gamma * col_sq
}

/// One update followed by pruning of atoms whose effective variance is below
/// `prune_eps` times the largest one. Pruning is kept only if the objective
/// stays within a `1e-10` relative slack of the previous state.
fn step(
    state: &SblState,
    gain: ArrayView2<f64>,
    col_sq: &Array1<f64>,
    algorithm: SblAlgorithm,
    prune_eps: f64,
) -> Result<SblState> {
    let gamma = update(state, gain, algorithm)?;
    let eff = effective(&gamma, col_sq);
    let threshold = prune_eps * eff.iter().fold(0.0f64, |m, &g| m.max(g));
    if gamma.iter().zip(eff.iter()).any(|(&g, &e)| g > 0.0 && e < threshold) {
        let pruned = Zip::from(&gamma).and(&eff).map_collect(|&g, &e| if e < threshold { 0.0 } else { g });
        let candidate = state.with_gamma(gain, pruned)?;
        if candidate.objective <= state.objective + PRUNE_SLACK * state.objective.abs() {
            return Ok(candidate);
        }
    }
    state.with_gamma(gain, gamma)
}

pub(crate) struct SblOutcome {
    pub state: SblState,
    pub coefficients: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn run_sbl(
    gain: ArrayView2<f64>,
    data: ArrayView2<f64>,
    init: Array1<f64>,
    config: &SolverConfig,
    algorithm: SblAlgorithm,
) -> Result<SblOutcome> {
    config.validate()?;
    let mut state = SblState::new(gain, data, init)?;
    let col_sq = gain.map_axis(Axis(0), |c| c.dot(&c));
    let mut converged = false;
    let mut iterations = 0;
    if state.support().is_empty() {
        converged = true;
    }
    while !converged && iterations < config.max_iters {
        let next = step(&state, gain, &col_sq, algorithm, config.prune_eps)?;
        iterations += 1;
        let old = effective(&state.gamma, &col_sq);
        let top = old.iter().fold(0.0f64, |m, &g| m.max(g));
        let change = Zip::from(&effective(&next.gamma, &col_sq))
            .and(&old)
            .fold(0.0f64, |m, &a, &b| m.max((a - b).abs()));
        state = next;
        if top == 0.0 || change <= config.tol_rel * top {
            converged = true;
        }
    }
    if !converged {
        log::info!("SBL: no convergence after {iterations} iterations");
    }
    let coefficients = state.posterior_mean(gain, data)?;
    Ok(SblOutcome {
        state,
        coefficients,
        iterations,
        converged,
    })
}

fn initial_gamma(x: &Array2<f64>) -> Array1<f64> {
    let l = x.ncols().max(1) as f64;
    x.map_axis(Axis(1), |row| row.iter().map(|v| v * v).sum::<f64>() / l)
}

fn into_estimate(
    name: &str,
    outcome: SblOutcome,
    sources: Array2<f64>,
    coefficients: Option<Array2<f64>>,
    lambda: f64,
) -> SourceEstimate {
    SourceEstimate {
        sources,
        coefficients,
        solver: name.to_string(),
        lambda,
        iterations: outcome.iterations,
        objective: outcome.state.objective,
        converged: outcome.converged,
        objective_trace: outcome.state.objective_trace,
    }
}

/// Spatial-domain SBL, with variances initialized from an MNE run with
/// weight `init_lambda`.
pub fn solve_sbl(
    problem: &WhitenedProblem,
    init_lambda: f64,
    config: &SolverConfig,
    algorithm: SblAlgorithm,
) -> Result<SourceEstimate> {
    let mne = solve_mne(problem, init_lambda)?;
    let gain = problem.gain.view();
    let outcome = run_sbl(gain, problem.data.view(), initial_gamma(&mne.sources), config, algorithm)?;
    let s = outcome.coefficients.clone();
    Ok(into_estimate("SBL", outcome, s, None, init_lambda))
}

/// SBL over wavelet coefficients, initialized from sgw-MNE.
pub fn solve_sgw_sbl(
    problem: &WhitenedProblem,
    frame: &WaveletFrame,
    init_lambda: f64,
    config: &SolverConfig,
    algorithm: SblAlgorithm,
) -> Result<SourceEstimate> {
    check_frame(problem, frame)?;
    let mne = solve_sgw_mne(problem, frame, init_lambda)?;
    let x0 = mne.coefficients.expect("sgw-MNE returns coefficients");
    let gw = wavelet_gain(problem)?.view();
    let outcome = run_sbl(gw, problem.data.view(), initial_gamma(&x0), config, algorithm)?;
    let s = frame.synthesize(outcome.coefficients.view())?;
    let x = outcome.coefficients.clone();
    Ok(into_estimate("sgw-SBL", outcome, s, Some(x), init_lambda))
}
