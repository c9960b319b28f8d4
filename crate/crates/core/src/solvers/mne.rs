use ndarray::{Array2, ArrayView2};

use super::{check_frame, data_misfit, wavelet_gain, SourceEstimate};
use crate::error::{Error, Result};
use crate::forward::WhitenedProblem;
use crate::frame::WaveletFrame;
use crate::linalg::SpdFactor;

/// Inverts `ρ² = 1 + ‖G‖²_F / (λ Tr Σ_B)` for λ.
pub fn lambda_from_snr(rho: f64, gain_frobenius_sq: f64, noise_trace: f64) -> Result<f64> {
    if !(rho > 1.0) {
        return Err(Error::param(format!("SNR must exceed 1, got {rho}")));
    }
    if !(noise_trace > 0.0) {
        return Err(Error::param("noise covariance trace must be positive"));
    }
    if rho.is_infinite() {
        return Ok(0.0);
    }
    Ok(gain_frobenius_sq / ((rho * rho - 1.0) * noise_trace))
}

/// Amplitude SNR `ρ = √(Tr C_Z / J)` of whitened data (unit noise per
/// channel).
pub fn estimate_snr(data: ArrayView2<f64>) -> f64 {
    let (j, l) = data.dim();
    if j == 0 || l == 0 {
        return 1.0;
    }
    let power = data.iter().map(|v| v * v).sum::<f64>() / l as f64;
    (power / j as f64).sqrt()
}

/// `Gᵀ (G Gᵀ + 2λ I)⁻¹ Z`.
fn ridge(gain: ArrayView2<f64>, data: ArrayView2<f64>, lambda: f64) -> Result<Array2<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("lambda must be nonnegative, got {lambda}")));
    }
    let mut k = gain.dot(&gain.t());
    k.diag_mut().mapv_inplace(|v| v + 2.0 * lambda);
    let factor = SpdFactor::new(k.view())
        .map_err(|_| Error::Numerical("G Gᵀ + 2λI is singular".into()))?;
    Ok(gain.t().dot(&factor.solve(data)))
}

/// `½‖Z − G S‖² + λ‖S‖²`.
pub fn mne_objective(gain: ArrayView2<f64>, data: ArrayView2<f64>, s: ArrayView2<f64>, lambda: f64) -> f64 {
    data_misfit(gain, data, s) + lambda * s.iter().map(|v| v * v).sum::<f64>()
}

/// `‖Gᵀ(G S − Z) + 2λ S‖_F / ‖GᵀZ‖_F`, zero at the minimizer.
pub fn mne_gradient_residual(
    gain: ArrayView2<f64>,
    data: ArrayView2<f64>,
    s: ArrayView2<f64>,
    lambda: f64,
) -> f64 {
    let grad = gain.t().dot(&(&gain.dot(&s) - &data)) + &s * (2.0 * lambda);
    let scale = gain.t().dot(&data).iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        norm
    } else {
        norm / scale
    }
}

/// Minimum-norm estimate.
pub fn solve_mne(problem: &WhitenedProblem, lambda: f64) -> Result<SourceEstimate> {
    let g = problem.gain.view();
    let z = problem.data.view();
    let s = ridge(g, z, lambda)?;
    let objective = mne_objective(g, z, s.view(), lambda);
    Ok(SourceEstimate::closed_form("MNE", s, None, lambda, objective))
}

/// Minimum-norm estimate over wavelet coefficients, synthesized back to
/// sources.
pub fn solve_sgw_mne(
    problem: &WhitenedProblem,
    frame: &WaveletFrame,
    lambda: f64,
) -> Result<SourceEstimate> {
    check_frame(problem, frame)?;
    let gw = wavelet_gain(problem)?.view();
    let z = problem.data.view();
    let x = ridge(gw, z, lambda)?;
    let objective = mne_objective(gw, z, x.view(), lambda);
    let s = frame.synthesize(x.view())?;
    Ok(SourceEstimate::closed_form("sgw-MNE", s, Some(x), lambda, objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn snr_inversion() {
        assert!((lambda_from_snr(3.0, 100.0, 10.0).unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(lambda_from_snr(f64::INFINITY, 100.0, 10.0).unwrap(), 0.0);
        assert!(lambda_from_snr(1e8, 100.0, 10.0).unwrap() < 1e-14);
        assert_eq!(lambda_from_snr(3.0, 0.0, 10.0).unwrap(), 0.0);
        assert!(lambda_from_snr(1.0, 1.0, 1.0).is_err());
        assert!(lambda_from_snr(0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_data_gives_zero() {
        let p = WhitenedProblem::spatial(random(4, 7, 1), Array2::zeros((4, 3))).unwrap();
        let est = solve_mne(&p, 0.3).unwrap();
        assert!(est.sources.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_gain_halves() {
        let z = array![[2.0, -4.0], [6.0, 1.0]];
        let p = WhitenedProblem::spatial(Array2::eye(2), z.clone()).unwrap();
        let est = solve_mne(&p, 0.5).unwrap();
        assert!((&est.sources - &(z / 2.0)).iter().all(|v| v.abs() < 1e-14));
    }

    // conjugate gradient on the normal equations (GᵀG + 2λI) s = Gᵀz
    fn cg_oracle(g: &Array2<f64>, z: &Array2<f64>, lambda: f64) -> Array2<f64> {
        let n = g.ncols();
        let mut out = Array2::zeros((n, z.ncols()));
        for col in 0..z.ncols() {
            let b = g.t().dot(&z.column(col));
            let apply = |v: &ndarray::Array1<f64>| g.t().dot(&g.dot(v)) + v * (2.0 * lambda);
            let mut x = ndarray::Array1::zeros(n);
            let mut r = b.clone();
            let mut p = r.clone();
            let mut rs = r.dot(&r);
            for _ in 0..10 * n {
                if rs.sqrt() < 1e-15 {
                    break;
                }
                let ap = apply(&p);
                let alpha = rs / p.dot(&ap);
                x.scaled_add(alpha, &p);
                r.scaled_add(-alpha, &ap);
                let next = r.dot(&r);
                p = &r + &(&p * (next / rs));
                rs = next;
            }
            out.column_mut(col).assign(&x);
        }
        out
    }

    #[test]
    fn matches_conjugate_gradient() {
        let g = random(5, 8, 2);
        let z = random(5, 2, 3);
        let p = WhitenedProblem::spatial(g.clone(), z.clone()).unwrap();
        let est = solve_mne(&p, 0.2).unwrap();
        let oracle = cg_oracle(&g, &z, 0.2);
        assert!((&est.sources - &oracle).iter().all(|v| v.abs() < 1e-6));
        assert!(mne_gradient_residual(g.view(), z.view(), est.sources.view(), 0.2) < 1e-8);
    }

    #[test]
    fn singular_without_regularization() {
        let g = array![[1.0, 1.0], [1.0, 1.0]];
        let p = WhitenedProblem::spatial(g, array![[1.0], [1.0]]).unwrap();
        assert!(solve_mne(&p, 0.0).is_err());
        assert!(solve_mne(&p, -1.0).is_err());
    }

    #[test]
    fn snr_estimate() {
        let z = Array2::from_elem((4, 10), 3.0);
        assert!((estimate_snr(z.view()) - 3.0).abs() < 1e-15);
    }
}
