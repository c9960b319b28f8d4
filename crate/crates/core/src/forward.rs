//! Forward model: synthetic magnetometer leadfields, baseline noise
//! covariance, whitening with eigenvalue-threshold dimension reduction and
//! the wavelet-domain leadfield `G_W = G Wᵀ`.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::frame::WaveletFrame;
use crate::linalg;
use crate::mesh::{cross, dot, norm, sub, Point3, TriangleMesh};

/// `μ₀ / 4π` in T·m/A.
pub const MU0_OVER_4PI: f64 = 1e-7;

/// Default relative eigenvalue threshold for the whitener.
pub const DEFAULT_WHITEN_TAU: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeadfieldModel {
    /// Free-space current dipole read out by radially oriented point
    /// magnetometers.
    #[default]
    MagneticDipole,
}

#[derive(Debug, Clone)]
pub struct Leadfield {
    /// `J₀ × N` gain per unit source amplitude.
    pub gain: Array2<f64>,
    pub sensors: Vec<Point3>,
    pub orientations: Vec<Point3>,
}

impl Leadfield {
    /// Wraps an externally computed gain matrix.
    pub fn from_gain(gain: Array2<f64>) -> Result<Self> {
        check_gain(&gain, None)?;
        Ok(Leadfield {
            gain,
            sensors: Vec::new(),
            orientations: Vec::new(),
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.gain.nrows()
    }

    pub fn n_sources(&self) -> usize {
        self.gain.ncols()
    }
}

/// `count` points spread over the sphere of radius `radius` (Fibonacci
/// lattice), centered at the origin.
pub fn sensor_sphere(count: usize, radius: f64) -> Vec<Point3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [radius * r * phi.cos(), radius * r * phi.sin(), radius * z]
        })
        .collect()
}

/// Magnetic field of a current dipole `q` at `source`, evaluated at `sensor`
/// (Biot–Savart, no volume currents).
pub fn dipole_field(q: Point3, source: Point3, sensor: Point3) -> Point3 {
    let d = sub(sensor, source);
    let r = norm(d);
    let k = MU0_OVER_4PI / (r * r * r);
    cross(q, d).map(|c| k * c)
}

/// Leadfield of dipoles oriented along the outward surface normals, read
/// out along each sensor's radial axis (through the origin).
pub fn synth_leadfield(
    mesh: &TriangleMesh,
    sensors: &[Point3],
    model: LeadfieldModel,
) -> Result<Leadfield> {
    let LeadfieldModel::MagneticDipole = model;
    if sensors.is_empty() {
        return Err(Error::param("at least one sensor is required"));
    }
    let hull = mesh.bounding_radius();
    if let Some(j) = sensors.iter().position(|&s| norm(s) <= hull) {
        return Err(Error::param(format!(
            "sensor {j} lies inside the source hull (radius {hull:.4} m)"
        )));
    }
    let orientations = mesh.vertex_normals();
    let axes: Vec<Point3> = sensors.iter().map(|&s| s.map(|c| c / norm(s))).collect();
    let gain = Array2::from_shape_fn((sensors.len(), mesh.n_vertices()), |(j, n)| {
        dot(
            axes[j],
            dipole_field(orientations[n], mesh.vertices()[n], sensors[j]),
        )
    });
    // field magnitude of a tangential unit dipole at the closest approach
    let reference = sensors
        .iter()
        .flat_map(|&s| mesh.vertices().iter().map(move |&v| norm(sub(s, v))))
        .fold(f64::INFINITY, f64::min);
    check_gain(&gain, Some(MU0_OVER_4PI / (reference * reference)))?;
    Ok(Leadfield {
        gain,
        sensors: sensors.to_vec(),
        orientations,
    })
}

fn check_gain(gain: &Array2<f64>, reference: Option<f64>) -> Result<()> {
    if gain.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("leadfield has non-finite entries".into()));
    }
    let norms: Vec<f64> = gain
        .columns()
        .into_iter()
        .map(|c| c.dot(&c).sqrt())
        .collect();
    let scale = reference.unwrap_or_else(|| norms.iter().copied().fold(0.0, f64::max));
    if let Some(n) = norms.iter().position(|&v| !(v > 1e-14 * scale)) {
        return Err(Error::Numerical(format!(
            "source {n} is invisible to every sensor"
        )));
    }
    Ok(())
}

/// Baseline (noise) covariance `Σ_B`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    covariance: Array2<f64>,
    eigenvalues: Array1<f64>,
    eigenvectors: Array2<f64>,
}

impl NoiseModel {
    pub fn new(covariance: Array2<f64>) -> Result<Self> {
        let (r, c) = covariance.dim();
        if r != c || r == 0 {
            return Err(Error::dims(format!("covariance of shape {r}x{c}")));
        }
        let scale = covariance.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..r {
            for j in 0..i {
                if (covariance[[i, j]] - covariance[[j, i]]).abs() > 1e-12 * scale.max(1e-300) {
                    return Err(Error::param(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let (eigenvalues, eigenvectors) = linalg::sym_eigh(covariance.view())?;
        let top = eigenvalues[r - 1];
        if !(top > 0.0) || eigenvalues[0] < -1e-12 * top {
            return Err(Error::param("covariance is not positive semi-definite"));
        }
        Ok(NoiseModel {
            covariance,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.covariance.diag().sum()
    }

    /// Sensor-averaged noise standard deviation `√(mean diag Σ_B)`.
    pub fn mean_std(&self) -> f64 {
        (self.trace() / self.dim() as f64).sqrt()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    /// `U Λ^{1/2}`, a square root of `Σ_B` for sampling.
    pub fn sqrt_factor(&self) -> Array2<f64> {
        let half = self.eigenvalues.mapv(|v| v.max(0.0).sqrt());
        &self.eigenvectors * &half
    }

    /// `L` iid-in-time draws from `N(0, Σ_B)`, as a `J₀ × L` matrix.
    pub fn sample(&self, n_samples: usize, rng: &mut impl rand::Rng) -> Array2<f64> {
        let white = Array2::from_shape_simple_fn((self.dim(), n_samples), || {
            StandardNormal.sample(&mut *rng)
        });
        self.sqrt_factor().dot(&white)
    }
}

/// Random SPD covariance with eigenvalues geometrically spaced from
/// `variance` down to `variance / condition`, deterministic in `seed`.
pub fn synth_baseline_covariance(
    dim: usize,
    condition: f64,
    variance: f64,
    seed: u64,
) -> Result<NoiseModel> {
    if dim == 0 {
        return Err(Error::param("covariance dimension must be positive"));
    }
    if !(condition >= 1.0 && condition.is_finite()) {
        return Err(Error::param(format!("condition number must be >= 1, got {condition}")));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::param(format!("variance must be positive, got {variance}")));
    }
    if condition == 1.0 {
        return NoiseModel::new(Array2::eye(dim) * variance);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_simple_fn((dim, dim), || StandardNormal.sample(&mut rng));
    let sym = &a + &a.t();
    let (_, basis) = linalg::sym_eigh(sym.view())?;
    let spectrum = Array1::from_shape_fn(dim, |i| {
        let t = if dim == 1 { 0.0 } else { i as f64 / (dim - 1) as f64 };
        variance * condition.powf(-t)
    });
    let cov = (&basis * &spectrum).dot(&basis.t());
    let cov = (&cov + &cov.t()) * 0.5;
    NoiseModel::new(cov)
}

/// Whitening operator `Υ = Λ_r^{-1/2} U_rᵀ` over the eigenvectors of `Σ_B`
/// whose eigenvalues are at least `tau · λ_max`.
#[derive(Debug, Clone)]
pub struct Whitener {
    matrix: Array2<f64>,
    tau: f64,
}

impl Whitener {
    pub fn new(noise: &NoiseModel, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::param(format!("whitening threshold must lie in (0, 1), got {tau}")));
        }
        let vals = &noise.eigenvalues;
        let top = vals[vals.len() - 1];
        // descending eigenvalue order
        let keep: Vec<usize> = (0..vals.len())
            .rev()
            .filter(|&i| vals[i] >= tau * top && vals[i] > 0.0)
            .collect();
        if keep.is_empty() {
            return Err(Error::Numerical("no noise eigenvalue above the whitening threshold".into()));
        }
        let j0 = noise.dim();
        let matrix = Array2::from_shape_fn((keep.len(), j0), |(r, c)| {
            let i = keep[r];
            noise.eigenvectors[[c, i]] / vals[i].sqrt()
        });
        Ok(Whitener { matrix, tau })
    }

    /// `J × J₀`.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn retained_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn apply(&self, m: ArrayView2<f64>) -> Result<Array2<f64>> {
        if m.nrows() != self.matrix.ncols() {
            return Err(Error::dims(format!(
                "whitening {} rows with a {}-sensor whitener",
                m.nrows(),
                self.matrix.ncols()
            )));
        }
        Ok(self.matrix.dot(&m))
    }
}

/// The whitened operators shared by every scenario on a given geometry.
#[derive(Debug, Clone)]
pub struct WhitenedOperator {
    /// `G = Υ G₀`, `J × N`.
    pub gain: Arc<Array2<f64>>,
    /// `G_W = G Wᵀ`, `J × N_W`, when a frame is attached.
    pub wavelet_gain: Option<Arc<Array2<f64>>>,
}

impl WhitenedOperator {
    pub fn new(
        whitener: &Whitener,
        leadfield: &Leadfield,
        frame: Option<&WaveletFrame>,
    ) -> Result<Self> {
        let gain = whitener.apply(leadfield.gain.view())?;
        let wavelet_gain = match frame {
            Some(f) => {
                if f.n_vertices() != gain.ncols() {
                    return Err(Error::dims(format!(
                        "frame on {} vertices for a leadfield with {} sources",
                        f.n_vertices(),
                        gain.ncols()
                    )));
                }
                Some(Arc::new(gain.dot(&f.matrix().t())))
            }
            None => None,
        };
        Ok(WhitenedOperator {
            gain: Arc::new(gain),
            wavelet_gain,
        })
    }

    pub fn with_data(&self, data: Array2<f64>) -> Result<WhitenedProblem> {
        if data.nrows() != self.gain.nrows() {
            return Err(Error::dims(format!(
                "{} data rows for {} whitened channels",
                data.nrows(),
                self.gain.nrows()
            )));
        }
        Ok(WhitenedProblem {
            gain: self.gain.clone(),
            wavelet_gain: self.wavelet_gain.clone(),
            data,
        })
    }
}

/// `Z = G S + B` in whitened coordinates, where `B` has identity covariance.
#[derive(Debug, Clone)]
pub struct WhitenedProblem {
    pub gain: Arc<Array2<f64>>,
    pub wavelet_gain: Option<Arc<Array2<f64>>>,
    /// `Z = Υ Z₀`, `J × L`.
    pub data: Array2<f64>,
}

impl WhitenedProblem {
    /// Spatial-domain problem from raw matrices (no frame).
    pub fn spatial(gain: Array2<f64>, data: Array2<f64>) -> Result<Self> {
        if gain.nrows() != data.nrows() {
            return Err(Error::dims(format!(
                "gain has {} rows but data has {}",
                gain.nrows(),
                data.nrows()
            )));
        }
        Ok(WhitenedProblem {
            gain: Arc::new(gain),
            wavelet_gain: None,
            data,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.gain.nrows()
    }

    pub fn n_sources(&self) -> usize {
        self.gain.ncols()
    }

    pub fn n_times(&self) -> usize {
        self.data.ncols()
    }
}

/// Whitens raw data and leadfield, and precomputes the wavelet leadfield.
pub fn whiten(
    whitener: &Whitener,
    raw_data: ArrayView2<f64>,
    leadfield: &Leadfield,
    frame: Option<&WaveletFrame>,
) -> Result<WhitenedProblem> {
    let op = WhitenedOperator::new(whitener, leadfield, frame)?;
    op.with_data(whitener.apply(raw_data)?)
}
