//! Source estimators for `Z = G S + B`.
//!
//! Every variational estimator minimizes `½‖Z − G S‖²_F + f(S)`. The ½ on
//! the data term means the quadratic penalty `λ‖S‖²_F` leads to normal
//! equations with `2λ`, which matters when comparing λ values with other
//! toolkits. The `sgw-` variants solve the same problems over wavelet
//! coefficients `X` with `G_W = G Wᵀ` and return `S = Wᵀ X`.

mod mce;
mod mne;
mod sbl;
mod sccd;

use ndarray::{Array2, ArrayView2};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

pub use mce::{l1_objective, solve_mce, solve_sgw_mce, subgradient_residual};
pub use mne::{
    estimate_snr, lambda_from_snr, mne_gradient_residual, mne_objective, solve_mne, solve_sgw_mne,
};
pub use sbl::{
    sbl_objective, sbl_update_champagne, sbl_update_em, solve_sbl, solve_sgw_sbl, SblAlgorithm,
    SblState,
};
pub use sccd::{sccd_objective, solve_svbsccd};

use crate::error::{Error, Result};
use crate::forward::WhitenedProblem;
use crate::frame::WaveletFrame;
use crate::graph::CorticalGraph;

/// Iteration controls shared by the iterative solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative convergence tolerance (γ change for SBL, duality gap for
    /// sVB-SCCD).
    pub tol_rel: f64,
    /// Absolute subgradient tolerance for the ℓ¹ solvers; when unset,
    /// `tol_rel · ‖GᵀZ‖_max` is used.
    pub tol_abs: Option<f64>,
    /// SBL variances below `prune_eps · max γ` are frozen at zero.
    pub prune_eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 500,
            tol_rel: 1e-6,
            tol_abs: None,
            prune_eps: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be at least 1"));
        }
        if !(self.tol_rel > 0.0) {
            return Err(Error::param("tol_rel must be positive"));
        }
        if matches!(self.tol_abs, Some(t) if !(t > 0.0)) {
            return Err(Error::param("tol_abs must be positive"));
        }
        if !(self.prune_eps > 0.0 && self.prune_eps < 1.0) {
            return Err(Error::param("prune_eps must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// A source estimate with solver diagnostics.
#[derive(Debug, Clone)]
pub struct SourceEstimate {
    /// `N × L` sources.
    pub sources: Array2<f64>,
    /// `N_W × L` wavelet coefficients for the `sgw-` solvers.
    pub coefficients: Option<Array2<f64>>,
    pub solver: String,
    pub lambda: f64,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

impl SourceEstimate {
    pub(crate) fn closed_form(
        solver: &str,
        sources: Array2<f64>,
        coefficients: Option<Array2<f64>>,
        lambda: f64,
        objective: f64,
    ) -> Self {
        SourceEstimate {
            sources,
            coefficients,
            solver: solver.to_string(),
            lambda,
            iterations: 0,
            objective,
            converged: true,
            objective_trace: vec![objective],
        }
    }

    /// Number of nonzero coefficient rows (or source rows when there are no
    /// coefficients).
    pub fn support_size(&self) -> usize {
        let m = self.coefficients.as_ref().unwrap_or(&self.sources);
        m.rows()
            .into_iter()
            .filter(|r| r.iter().any(|&v| v != 0.0))
            .count()
    }
}

pub(crate) fn wavelet_gain(problem: &WhitenedProblem) -> Result<&Array2<f64>> {
    problem
        .wavelet_gain
        .as_deref()
        .ok_or_else(|| Error::param("problem has no wavelet leadfield; attach a frame"))
}

pub(crate) fn check_frame(problem: &WhitenedProblem, frame: &WaveletFrame) -> Result<()> {
    let gw = wavelet_gain(problem)?;
    if gw.ncols() != frame.n_coefficients() || frame.n_vertices() != problem.n_sources() {
        return Err(Error::dims(format!(
            "wavelet leadfield has {} columns, frame has {} atoms on {} vertices",
            gw.ncols(),
            frame.n_coefficients(),
            frame.n_vertices()
        )));
    }
    Ok(())
}

/// `½‖Z − G S‖²_F`.
pub fn data_misfit(gain: ArrayView2<f64>, data: ArrayView2<f64>, s: ArrayView2<f64>) -> f64 {
    let r = &data - &gain.dot(&s);
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// `‖GᵀZ‖_max`, the smallest ℓ¹ weight for which zero is optimal.
pub fn max_correlation(gain: ArrayView2<f64>, data: ArrayView2<f64>) -> f64 {
    gain.t()
        .dot(&data)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// How a regularization weight is chosen for a given problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regularization {
    /// Use this value as is.
    Fixed { value: f64 },
    /// Quadratic-prior heuristic `λ = ‖G‖²_F / ((ρ²−1) Tr Σ_B)` with the
    /// given amplitude SNR `ρ`.
    Snr { rho: f64 },
    /// As `Snr`, with `ρ² = Tr C_Z / J` estimated from the whitened data;
    /// the estimate is floored at `min_rho`.
    SnrFromData { min_rho: f64 },
    /// `λ = fraction · ‖GᵀZ‖_max` (ℓ¹ penalties; not derived from a prior).
    DataFraction { fraction: f64 },
}

impl Regularization {
    /// Resolves the weight for leadfield `gain` (`G` or `G_W`) on whitened
    /// data, where `Tr Σ_B = J`.
    pub fn resolve(&self, gain: ArrayView2<f64>, data: ArrayView2<f64>) -> Result<f64> {
        let frob = gain.iter().map(|v| v * v).sum::<f64>();
        let trace = gain.nrows() as f64;
        let value = match *self {
            Regularization::Fixed { value } => value,
            Regularization::Snr { rho } => lambda_from_snr(rho, frob, trace)?,
            Regularization::SnrFromData { min_rho } => {
                if !(min_rho > 1.0) {
                    return Err(Error::param("min_rho must exceed 1"));
                }
                let rho = estimate_snr(data).max(min_rho);
                lambda_from_snr(rho, frob, trace)?
            }
            Regularization::DataFraction { fraction } => {
                if !(fraction > 0.0) {
                    return Err(Error::param("regularization fraction must be positive"));
                }
                fraction * max_correlation(gain, data)
            }
        };
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::param(format!("invalid regularization weight {value}")));
        }
        Ok(value)
    }
}

/// An estimator with its hyper-parameter rules, as named in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "solver", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Mne {
        lambda: Regularization,
    },
    SgwMne {
        lambda: Regularization,
    },
    Mce {
        lambda: Regularization,
        #[serde(default)]
        config: SolverConfig,
    },
    SgwMce {
        lambda: Regularization,
        #[serde(default)]
        config: SolverConfig,
    },
    SvbSccd {
        lambda: Regularization,
        mu: Regularization,
        #[serde(default)]
        config: SolverConfig,
    },
    Sbl {
        algorithm: SblAlgorithm,
        /// Weight of the MNE run that initializes γ.
        init_lambda: Regularization,
        #[serde(default)]
        config: SolverConfig,
    },
    SgwSbl {
        algorithm: SblAlgorithm,
        init_lambda: Regularization,
        #[serde(default)]
        config: SolverConfig,
    },
}

impl EstimatorSpec {
    /// Short identifier used in file names and reports.
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::Mne { .. } => "MNE",
            EstimatorSpec::SgwMne { .. } => "sgw-MNE",
            EstimatorSpec::Mce { .. } => "MCE",
            EstimatorSpec::SgwMce { .. } => "sgw-MCE",
            EstimatorSpec::SvbSccd { .. } => "sVB-SCCD",
            EstimatorSpec::Sbl { .. } => "SBL",
            EstimatorSpec::SgwSbl { .. } => "sgw-SBL",
        }
    }

    pub fn needs_frame(&self) -> bool {
        matches!(
            self,
            EstimatorSpec::SgwMne { .. } | EstimatorSpec::SgwMce { .. } | EstimatorSpec::SgwSbl { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorSpec::Mce { config, .. }
            | EstimatorSpec::SgwMce { config, .. }
            | EstimatorSpec::SvbSccd { config, .. }
            | EstimatorSpec::Sbl { config, .. }
            | EstimatorSpec::SgwSbl { config, .. } => config.validate(),
            _ => Ok(()),
        }
    }

    /// Runs the estimator. `graph` is required by sVB-SCCD and `frame` by
    /// the wavelet-domain estimators.
    pub fn run(
        &self,
        problem: &WhitenedProblem,
        graph: Option<&CorticalGraph>,
        frame: Option<&WaveletFrame>,
    ) -> Result<SourceEstimate> {
        let need_frame = || frame.ok_or_else(|| Error::param(format!("{} needs a frame", self.name())));
        let z = problem.data.view();
        match self {
            EstimatorSpec::Mne { lambda } => {
                solve_mne(problem, lambda.resolve(problem.gain.view(), z)?)
            }
            EstimatorSpec::SgwMne { lambda } => {
                let gw = wavelet_gain(problem)?;
                solve_sgw_mne(problem, need_frame()?, lambda.resolve(gw.view(), z)?)
            }
            EstimatorSpec::Mce { lambda, config } => {
                solve_mce(problem, lambda.resolve(problem.gain.view(), z)?, config)
            }
            EstimatorSpec::SgwMce { lambda, config } => {
                let gw = wavelet_gain(problem)?;
                solve_sgw_mce(problem, need_frame()?, lambda.resolve(gw.view(), z)?, config)
            }
            EstimatorSpec::SvbSccd { lambda, mu, config } => {
                let graph = graph.ok_or_else(|| Error::param("sVB-SCCD needs the mesh graph"))?;
                let g = problem.gain.view();
                solve_svbsccd(problem, graph, lambda.resolve(g, z)?, mu.resolve(g, z)?, config)
            }
            EstimatorSpec::Sbl {
                algorithm,
                init_lambda,
                config,
            } => {
                let lam = init_lambda.resolve(problem.gain.view(), z)?;
                solve_sbl(problem, lam, config, *algorithm)
            }
            EstimatorSpec::SgwSbl {
                algorithm,
                init_lambda,
                config,
            } => {
                let gw = wavelet_gain(problem)?;
                let lam = init_lambda.resolve(gw.view(), z)?;
                solve_sgw_sbl(problem, need_frame()?, lam, config, *algorithm)
            }
        }
    }
}
