//! Spectral graph wavelet frames.
//!
//! The frame stacks `N` scaling functions `φ_n = T_h δ_n` on top of `N_s`
//! blocks of wavelets `ψ_{s,n} = T_g^s δ_n`, giving an `N(N_s+1) × N`
//! analysis matrix `W`. Kernels act on the Laplacian spectrum:
//! `T_g^s = χ diag(g(sλ)) χᵀ`.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LaplacianSpectrum;
use crate::linalg::SpdFactor;

/// Location of the maximum of [`kernel_g`], `2 − 1/√3`.
pub const G_PEAK_LOCATION: f64 = 2.0 - 0.577_350_269_189_625_8;

/// Piecewise-polynomial band-pass kernel: `x²` on `[0,1]`, the cubic
/// `−5 + 11x − 6x² + x³` on `[1,2]` and `(2/x)²` beyond.
pub fn kernel_g(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 1.0 {
        x * x
    } else if x <= 2.0 {
        -5.0 + x * (11.0 + x * (-6.0 + x))
    } else {
        let r = 2.0 / x;
        r * r
    }
}

/// `max_x g(x)`.
pub fn kernel_g_max() -> f64 {
    kernel_g(G_PEAK_LOCATION)
}

/// Low-pass kernel `h(x) = max(g)·exp(−(x / 0.6λ_min)⁴)`.
pub fn kernel_h(x: f64, lambda_min: f64) -> f64 {
    debug_assert!(x >= 0.0 && lambda_min > 0.0);
    let r = x / (0.6 * lambda_min);
    kernel_g_max() * (-(r * r) * (r * r)).exp()
}

/// Center frequency of `g` divided by its half-power bandwidth, the band
/// where `g² ≥ max(g)²/2`.
pub fn quality_factor() -> f64 {
    let level = kernel_g_max() / std::f64::consts::SQRT_2;
    let lo = bisect(|x| kernel_g(x) - level, 0.0, G_PEAK_LOCATION);
    let hi = bisect(|x| level - kernel_g(x), G_PEAK_LOCATION, 100.0);
    G_PEAK_LOCATION / (hi - lo)
}

// root of an increasing function on [a, b]
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-15 * b.abs().max(1.0) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Spectral responses of a filter bank: one low-pass and `n_scales`
/// band-pass filters.
pub trait FilterBank {
    fn n_scales(&self) -> usize;
    fn low_pass(&self, lambda: f64) -> f64;
    /// Response of the band-pass filter at scale index `j`.
    fn band_pass(&self, lambda: f64, j: usize) -> f64;

    /// `G(λ) = h(λ)² + Σ_j g(s_j λ)²`.
    fn frame_response(&self, lambda: f64) -> f64 {
        let h = self.low_pass(lambda);
        h * h
            + (0..self.n_scales())
                .map(|j| self.band_pass(lambda, j).powi(2))
                .sum::<f64>()
    }
}

/// Hyper-parameters of the standard wavelet design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// Cutoff divisor `K`: `λ_min = λ_max / K`.
    pub cutoff_divisor: f64,
    pub n_scales: usize,
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// Increasing: `scales[0]` peaks at `λ_max`, the last at `λ_min`.
    pub scales: Vec<f64>,
    pub quality_factor: f64,
}

impl KernelSpec {
    /// Log-spaced scales whose band-pass peaks `x*/s_j` run geometrically
    /// from `λ_max` down to `λ_min`. A single scale peaks at
    /// `√(λ_min λ_max)`.
    pub fn design(lambda_max: f64, cutoff_divisor: f64, n_scales: usize) -> Result<Self> {
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(Error::param(format!("lambda_max must be positive, got {lambda_max}")));
        }
        if !(cutoff_divisor > 1.0 && cutoff_divisor.is_finite()) {
            return Err(Error::param(format!("K must exceed 1, got {cutoff_divisor}")));
        }
        if n_scales == 0 {
            return Err(Error::param("at least one wavelet scale is required"));
        }
        let lambda_min = lambda_max / cutoff_divisor;
        let scales = if n_scales == 1 {
            vec![G_PEAK_LOCATION / (lambda_min * lambda_max).sqrt()]
        } else {
            let (lo, hi) = (
                (G_PEAK_LOCATION / lambda_max).ln(),
                (G_PEAK_LOCATION / lambda_min).ln(),
            );
            let step = (hi - lo) / (n_scales - 1) as f64;
            (0..n_scales).map(|j| (lo + step * j as f64).exp()).collect()
        };
        Ok(KernelSpec {
            cutoff_divisor,
            n_scales,
            lambda_max,
            lambda_min,
            scales,
            quality_factor: quality_factor(),
        })
    }
}

impl FilterBank for KernelSpec {
    fn n_scales(&self) -> usize {
        self.n_scales
    }

    fn low_pass(&self, lambda: f64) -> f64 {
        kernel_h(lambda, self.lambda_min)
    }

    fn band_pass(&self, lambda: f64, j: usize) -> f64 {
        kernel_g(self.scales[j] * lambda)
    }
}

/// `(A, B)`: extreme values of `G(λ)` over the discrete spectrum.
pub fn frame_bounds(spectrum: &LaplacianSpectrum, bank: &dyn FilterBank) -> Result<(f64, f64)> {
    let (lo, hi) = spectrum
        .eigenvalues
        .iter()
        .map(|&l| bank.frame_response(l))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !(lo > f64::EPSILON * hi) {
        return Err(Error::DegenerateFrame);
    }
    Ok((lo, hi))
}

/// Dense spectral graph wavelet frame.
#[derive(Debug, Clone)]
pub struct WaveletFrame {
    matrix: Array2<f64>,
    n_vertices: usize,
    n_scales: usize,
    /// Per-block spectral responses, `(N_s + 1) × N`; row 0 is `h(λ)`.
    responses: Array2<f64>,
    bounds: (f64, f64),
    spectrum: Arc<LaplacianSpectrum>,
}

impl WaveletFrame {
    pub fn build(spectrum: Arc<LaplacianSpectrum>, bank: &dyn FilterBank) -> Result<Self> {
        let n = spectrum.len();
        if spectrum.eigenvectors.dim() != (n, n) {
            return Err(Error::dims(format!(
                "{} eigenvalues but a {:?} eigenvector matrix",
                n,
                spectrum.eigenvectors.dim()
            )));
        }
        let n_scales = bank.n_scales();
        let bounds = frame_bounds(&spectrum, bank)?;
        let blocks = n_scales + 1;
        let responses = Array2::from_shape_fn((blocks, n), |(b, l)| {
            let lambda = spectrum.eigenvalues[l];
            if b == 0 {
                bank.low_pass(lambda)
            } else {
                bank.band_pass(lambda, b - 1)
            }
        });
        let chi = &spectrum.eigenvectors;
        let mut matrix = Array2::zeros((n * blocks, n));
        for b in 0..blocks {
            // χ diag(k) χᵀ
            let weighted = chi * &responses.row(b);
            let block = weighted.dot(&chi.t());
            matrix.slice_mut(s![b * n..(b + 1) * n, ..]).assign(&block);
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("frame matrix has non-finite entries".into()));
        }
        Ok(WaveletFrame {
            matrix,
            n_vertices: n,
            n_scales,
            responses,
            bounds,
            spectrum,
        })
    }

    /// `W`, of shape `N_W × N`.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_scales(&self) -> usize {
        self.n_scales
    }

    /// `N_W = N (N_s + 1)`.
    pub fn n_coefficients(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn responses(&self) -> &Array2<f64> {
        &self.responses
    }

    pub fn spectrum(&self) -> &LaplacianSpectrum {
        &self.spectrum
    }

    /// `G(λ_l)` for every eigenvalue.
    pub fn frame_response(&self) -> Array1<f64> {
        self.responses.mapv(|v| v * v).sum_axis(ndarray::Axis(0))
    }

    /// `X = W F` for an `N × L` signal.
    pub fn analyze(&self, f: ArrayView2<f64>) -> Result<Array2<f64>> {
        if f.nrows() != self.n_vertices {
            return Err(Error::dims(format!(
                "analysis of {} rows on a {}-vertex frame",
                f.nrows(),
                self.n_vertices
            )));
        }
        Ok(self.matrix.dot(&f))
    }

    /// `F = Wᵀ X` for `N_W × L` coefficients.
    pub fn synthesize(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n_coefficients() {
            return Err(Error::dims(format!(
                "synthesis of {} rows with {} frame atoms",
                x.nrows(),
                self.n_coefficients()
            )));
        }
        Ok(self.matrix.t().dot(&x))
    }

    /// Canonical dual `W (WᵀW)⁻¹`, so that `Wᵀ W_dual = I`.
    pub fn dual(&self) -> Result<Array2<f64>> {
        let gram = self.matrix.t().dot(&self.matrix);
        let factor = SpdFactor::new(gram.view()).map_err(|_| Error::DegenerateFrame)?;
        // W_dual = (Gram⁻¹ Wᵀ)ᵀ, Gram symmetric
        Ok(factor.solve(self.matrix.t()).reversed_axes())
    }
}

/// Tabulated kernel curves on `[0, λ_max]`: columns are `λ`, `h(λ)` and
/// `g(s_j λ)` for each scale.
pub fn kernel_curves(spec: &KernelSpec, n_points: usize) -> Array2<f64> {
    let n_points = n_points.max(2);
    Array2::from_shape_fn((n_points, spec.n_scales + 2), |(i, c)| {
        let lambda = spec.lambda_max * i as f64 / (n_points - 1) as f64;
        match c {
            0 => lambda,
            1 => spec.low_pass(lambda),
            j => spec.band_pass(lambda, j - 2),
        }
    })
}
