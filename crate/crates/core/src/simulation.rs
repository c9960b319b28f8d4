//! Monte Carlo patch scenarios: connected source patches with constant
//! amplitude on an active window, PSNR-calibrated against correlated sensor
//! noise, and the sweep that solves and scores them.

use std::path::PathBuf;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{
    sensor_sphere, synth_baseline_covariance, synth_leadfield, Leadfield, LeadfieldModel, NoiseModel,
    WhitenedOperator, Whitener, DEFAULT_WHITEN_TAU,
};
use crate::frame::{KernelSpec, WaveletFrame};
use crate::graph::{CorticalGraph, EdgeWeights, LaplacianSpectrum, DEFAULT_EIGEN_CAP};
use crate::mesh::{generate_icosphere, load_mesh, TriangleMesh};
use crate::metrics::{score, MetricRecord, Reference};
use crate::solvers::{EstimatorSpec, SourceEstimate};

/// Where the source surface comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    Icosphere { subdivisions: u32, radius: f64 },
    File { path: PathBuf },
}

/// Radial folding applied to the mesh so that surface normals are not all
/// radial (radial dipoles on a sphere are silent to radial magnetometers).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Corrugation {
    pub amplitude: f64,
    pub frequency: f64,
}

/// Independent radial jitter of each vertex (see [`TriangleMesh::roughened`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Roughness {
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct FrameConfig {
    /// `K` in `λ_min = λ_max / K`.
    pub cutoff_divisor: f64,
    pub n_scales: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            cutoff_divisor: 16.0,
            n_scales: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardConfig {
    pub n_sensors: usize,
    /// Radius of the sensor sphere in meters.
    pub sensor_radius: f64,
    /// Condition number of the synthetic baseline covariance.
    pub noise_condition: f64,
    /// Mean noise variance per sensor.
    pub noise_variance: f64,
    pub noise_seed: u64,
    /// Relative eigenvalue threshold of the whitener.
    pub whiten_tau: f64,
    /// Optional externally computed `J₀ × N` leadfield (binary matrix file).
    pub leadfield_file: Option<PathBuf>,
    /// Optional externally estimated `J₀ × J₀` covariance (binary matrix file).
    pub covariance_file: Option<PathBuf>,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            n_sensors: 60,
            sensor_radius: 0.11,
            noise_condition: 10.0,
            noise_variance: 1.0,
            noise_seed: 0,
            whiten_tau: DEFAULT_WHITEN_TAU,
            leadfield_file: None,
            covariance_file: None,
        }
    }
}

/// Everything needed to build the geometry shared by all scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub mesh: MeshSource,
    pub corrugation: Option<Corrugation>,
    pub roughness: Option<Roughness>,
    pub frame: FrameConfig,
    pub forward: ForwardConfig,
    pub eigen_cap: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            mesh: MeshSource::Icosphere {
                subdivisions: 4,
                radius: 0.07,
            },
            corrugation: Some(Corrugation {
                amplitude: 0.4,
                frequency: 2.5,
            }),
            roughness: Some(Roughness {
                amplitude: 0.1,
                seed: 0,
            }),
            frame: FrameConfig::default(),
            forward: ForwardConfig::default(),
            eigen_cap: DEFAULT_EIGEN_CAP,
        }
    }
}

impl GeometryConfig {
    /// The source surface after folding and jitter.
    pub fn build_mesh(&self) -> Result<TriangleMesh> {
        let base = match &self.mesh {
            MeshSource::Icosphere { subdivisions, radius } => generate_icosphere(*subdivisions, *radius)?,
            MeshSource::File { path } => load_mesh(path)?,
        };
        let mesh = match self.corrugation {
            Some(c) => base.corrugated(c.amplitude, c.frequency)?,
            None => base,
        };
        match self.roughness {
            Some(r) => mesh.roughened(r.amplitude, r.seed),
            None => Ok(mesh),
        }
    }

    /// Paths of every external file the configuration refers to.
    pub fn referenced_files(&self) -> Vec<&std::path::Path> {
        let mut files = Vec::new();
        if let MeshSource::File { path } = &self.mesh {
            files.push(path.as_path());
        }
        files.extend(self.forward.leadfield_file.as_deref());
        files.extend(self.forward.covariance_file.as_deref());
        files
    }
}

/// Mesh, graph, wavelet frame and forward model shared by a sweep.
pub struct Geometry {
    pub mesh: TriangleMesh,
    pub graph: CorticalGraph,
    pub spectrum: Arc<LaplacianSpectrum>,
    pub kernels: KernelSpec,
    pub frame: WaveletFrame,
    pub leadfield: Leadfield,
    pub noise: NoiseModel,
    pub whitener: Whitener,
    pub operator: WhitenedOperator,
    pub distances: Array2<f64>,
}

impl Geometry {
    pub fn build(config: &GeometryConfig) -> Result<Self> {
        Self::from_mesh(config.build_mesh()?, config)
    }

    pub fn from_mesh(mesh: TriangleMesh, config: &GeometryConfig) -> Result<Self> {
        let graph = CorticalGraph::from_mesh(&mesh, EdgeWeights::Binary);
        let spectrum = Arc::new(graph.eigendecompose(config.eigen_cap)?);
        let kernels = KernelSpec::design(
            spectrum.lambda_max,
            config.frame.cutoff_divisor,
            config.frame.n_scales,
        )?;
        let frame = WaveletFrame::build(spectrum.clone(), &kernels)?;
        let fwd = &config.forward;
        let leadfield = match &fwd.leadfield_file {
            Some(path) => Leadfield::from_gain(crate::io::read_matrix(path)?)?,
            None => {
                let sensors = sensor_sphere(fwd.n_sensors, fwd.sensor_radius);
                synth_leadfield(&mesh, &sensors, LeadfieldModel::MagneticDipole)?
            }
        };
        if leadfield.n_sources() != mesh.n_vertices() {
            return Err(Error::dims(format!(
                "leadfield has {} sources for a mesh of {} vertices",
                leadfield.n_sources(),
                mesh.n_vertices()
            )));
        }
        let noise = match &fwd.covariance_file {
            Some(path) => NoiseModel::new(crate::io::read_matrix(path)?)?,
            None => synth_baseline_covariance(
                leadfield.n_sensors(),
                fwd.noise_condition,
                fwd.noise_variance,
                fwd.noise_seed,
            )?,
        };
        if noise.dim() != leadfield.n_sensors() {
            return Err(Error::dims(format!(
                "covariance of size {} for {} sensors",
                noise.dim(),
                leadfield.n_sensors()
            )));
        }
        let whitener = Whitener::new(&noise, fwd.whiten_tau)?;
        let operator = WhitenedOperator::new(&whitener, &leadfield, Some(&frame))?;
        let distances = mesh.vertex_distances();
        Ok(Geometry {
            mesh,
            graph,
            spectrum,
            kernels,
            frame,
            leadfield,
            noise,
            whitener,
            operator,
            distances,
        })
    }
}

/// Connected set of `size` vertices containing `seed_vertex`, grown by
/// randomized breadth-first accretion: each step adds a uniformly chosen
/// vertex of the current frontier.
pub fn grow_patch(graph: &CorticalGraph, seed_vertex: usize, size: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let n = graph.n_vertices();
    if seed_vertex >= n {
        return Err(Error::IndexOutOfRange(format!("seed vertex {seed_vertex} of {n}")));
    }
    if size == 0 || size > n {
        return Err(Error::param(format!("patch size {size} outside 1..={n}")));
    }
    let mut queued = vec![false; n];
    let mut patch = Vec::with_capacity(size);
    let mut frontier = vec![seed_vertex];
    queued[seed_vertex] = true;
    while patch.len() < size {
        if frontier.is_empty() {
            return Err(Error::param(format!(
                "component of vertex {seed_vertex} has only {} vertices, fewer than {size}",
                patch.len()
            )));
        }
        let pick = rng.random_range(0..frontier.len());
        let v = frontier.swap_remove(pick);
        patch.push(v);
        for u in graph.neighbors(v) {
            if !queued[u] {
                queued[u] = true;
                frontier.push(u);
            }
        }
    }
    patch.sort_unstable();
    Ok(patch)
}

/// `β = psnr · σ / p`, where `p` is the peak sensor magnitude produced by
/// unit amplitude on the patch with time course `waveform`, and `σ` the
/// root mean noise variance.
pub fn calibrate_beta(
    gain0: ArrayView2<f64>,
    patch: &[usize],
    noise: &NoiseModel,
    psnr: f64,
    waveform: ArrayView1<f64>,
) -> Result<f64> {
    if !(psnr > 0.0 && psnr.is_finite()) {
        return Err(Error::param(format!("PSNR must be positive, got {psnr}")));
    }
    if noise.dim() != gain0.nrows() {
        return Err(Error::dims("noise model and leadfield disagree on sensors"));
    }
    let mut topo = Array1::<f64>::zeros(gain0.nrows());
    for &k in patch {
        if k >= gain0.ncols() {
            return Err(Error::IndexOutOfRange(format!("patch vertex {k}")));
        }
        topo += &gain0.column(k);
    }
    let wmax = waveform.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let p = topo.iter().fold(0.0f64, |m, v| m.max(v.abs())) * wmax;
    if p == 0.0 {
        return Err(Error::Numerical("patch is invisible to the sensors".into()));
    }
    Ok(psnr * noise.mean_std() / p)
}

/// Per-scenario simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub psnr: f64,
    pub n_times: usize,
    /// Inclusive active window; defaults to the second half of the record.
    pub window: Option<(usize, usize)>,
    /// Multiplier on the noise realization (β is calibrated for scale 1).
    pub noise_scale: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            psnr: 50.0,
            n_times: 100,
            window: None,
            noise_scale: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn active_window(&self) -> Result<(usize, usize)> {
        let w = self.window.unwrap_or((self.n_times / 2, self.n_times.saturating_sub(1)));
        if self.n_times == 0 || w.0 > w.1 || w.1 >= self.n_times {
            return Err(Error::param(format!(
                "active window {:?} invalid for {} samples",
                w, self.n_times
            )));
        }
        Ok(w)
    }

    pub fn waveform(&self) -> Result<Array1<f64>> {
        let (l0, l1) = self.active_window()?;
        Ok(Array1::from_shape_fn(self.n_times, |l| if l >= l0 && l <= l1 { 1.0 } else { 0.0 }))
    }
}

/// One simulated patch with its sensor data.
#[derive(Debug, Clone)]
pub struct PatchScenario {
    pub patch: Vec<usize>,
    pub beta: f64,
    pub psnr: f64,
    pub window: (usize, usize),
    /// `N × L` reference sources.
    pub sources: Array2<f64>,
    /// `J₀ × L` noise realization.
    pub noise: Array2<f64>,
    /// `Z = G₀ S + B`.
    pub data: Array2<f64>,
    pub seed: u64,
}

impl PatchScenario {
    pub fn patch_size(&self) -> usize {
        self.patch.len()
    }
}

/// `N × L` sources equal to `beta · waveform` on the patch and zero elsewhere.
pub fn patch_sources(n_vertices: usize, patch: &[usize], beta: f64, waveform: ArrayView1<f64>) -> Result<Array2<f64>> {
    let mut sources = Array2::<f64>::zeros((n_vertices, waveform.len()));
    for &k in patch {
        if k >= n_vertices {
            return Err(Error::IndexOutOfRange(format!("patch vertex {k} of {n_vertices}")));
        }
        sources.row_mut(k).assign(&(&waveform * beta));
    }
    Ok(sources)
}

/// Draws a patch at a uniformly random seed vertex and simulates data.
pub fn simulate_scenario(
    graph: &CorticalGraph,
    leadfield: &Leadfield,
    noise: &NoiseModel,
    patch_size: usize,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<PatchScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = graph.n_vertices();
    if leadfield.n_sources() != n {
        return Err(Error::dims("leadfield and graph disagree on vertices"));
    }
    let seed_vertex = rng.random_range(0..n);
    let patch = grow_patch(graph, seed_vertex, patch_size, &mut rng)?;
    let waveform = config.waveform()?;
    let beta = calibrate_beta(leadfield.gain.view(), &patch, noise, config.psnr, waveform.view())?;
    let sources = patch_sources(n, &patch, beta, waveform.view())?;
    let b = noise.sample(config.n_times, &mut rng) * config.noise_scale;
    let data = leadfield.gain.dot(&sources) + &b;
    Ok(PatchScenario {
        patch,
        beta,
        psnr: config.psnr,
        window: config.active_window()?,
        sources,
        noise: b,
        data,
        seed,
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable per-scenario seed derived from the master seed, patch size and
/// scenario index.
pub fn scenario_seed(master_seed: u64, patch_size: usize, index: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ patch_size as u64) ^ index as u64)
}

/// Sweep settings: `n_patches` scenarios for each patch size, each solved by
/// every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_patches: usize,
    pub sizes: Vec<usize>,
    pub scenario: ScenarioConfig,
    pub solvers: Vec<EstimatorSpec>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_patches: 30,
            sizes: vec![10, 100],
            scenario: ScenarioConfig::default(),
            solvers: default_solvers(),
        }
    }
}

/// The four estimators compared in the benchmark tables. Every ℓ¹ weight
/// uses the same fraction of `‖GᵀZ‖_max`.
pub fn default_solvers() -> Vec<EstimatorSpec> {
    use crate::solvers::{Regularization, SblAlgorithm, SolverConfig};
    let l1 = Regularization::DataFraction { fraction: 0.02 };
    let snr = Regularization::SnrFromData { min_rho: 1.5 };
    vec![
        EstimatorSpec::Mne { lambda: snr },
        EstimatorSpec::Mce {
            lambda: l1,
            config: SolverConfig::default(),
        },
        EstimatorSpec::SvbSccd {
            lambda: l1,
            mu: l1,
            config: SolverConfig::default(),
        },
        EstimatorSpec::SgwSbl {
            algorithm: SblAlgorithm::Champagne,
            init_lambda: snr,
            config: SolverConfig {
                max_iters: 3000,
                ..SolverConfig::default()
            },
        },
    ]
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patches == 0 {
            return Err(Error::param("n_patches must be at least 1"));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::param("patch sizes must be nonempty and positive"));
        }
        if self.solvers.is_empty() {
            return Err(Error::param("no solvers configured"));
        }
        let mut names: Vec<&str> = self.solvers.iter().map(|s| s.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("each solver may appear once per sweep"));
        }
        for s in &self.solvers {
            s.validate()?;
        }
        self.scenario.active_window()?;
        if !(self.scenario.psnr > 0.0) || !(self.scenario.noise_scale >= 0.0) {
            return Err(Error::param("psnr must be positive and noise_scale nonnegative"));
        }
        Ok(())
    }
}

/// A solver that failed on a scenario; the sweep carries on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverFailure {
    pub patch_size: usize,
    pub scenario: usize,
    pub solver: String,
    pub message: String,
}

/// Estimates and scores for one scenario.
pub struct SolvedScenario {
    /// Whitened data the solvers saw.
    pub whitened: Array2<f64>,
    pub estimates: Vec<SourceEstimate>,
    pub records: Vec<MetricRecord>,
    pub failures: Vec<SolverFailure>,
}

/// Runs every solver on one scenario's sensor data and scores the
/// estimates. A failing solver is recorded and the others still run.
pub fn solve_scenario(
    geometry: &Geometry,
    solvers: &[EstimatorSpec],
    patch_size: usize,
    index: usize,
    sources: ArrayView2<f64>,
    data: ArrayView2<f64>,
    window: (usize, usize),
) -> Result<SolvedScenario> {
    let whitened = geometry.whitener.apply(data)?;
    let problem = geometry.operator.with_data(whitened.clone())?;
    let reference = Reference {
        sources,
        data: whitened.view(),
        window,
        distances: geometry.distances.view(),
    };
    let mut estimates = Vec::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for spec in solvers {
        let fail = |e: Error| SolverFailure {
            patch_size,
            scenario: index,
            solver: spec.name().to_string(),
            message: e.to_string(),
        };
        let est = match spec.run(&problem, Some(&geometry.graph), Some(&geometry.frame)) {
            Ok(est) => est,
            Err(e) => {
                failures.push(fail(e));
                continue;
            }
        };
        match score(est.sources.view(), &reference) {
            Ok(s) => records.push(MetricRecord {
                patch_size,
                scenario: index,
                solver: spec.name().to_string(),
                sd_ratio: s.sd_ratio,
                wasserstein1: s.wasserstein1,
                l2_ratio: Some(s.l2_ratio),
                sd: s.sd,
                sd_ref: s.sd_ref,
                t_max: s.t_max,
                iterations: est.iterations,
                converged: est.converged,
            }),
            Err(e) => failures.push(fail(e)),
        }
        estimates.push(est);
    }
    Ok(SolvedScenario {
        whitened,
        estimates,
        records,
        failures,
    })
}

/// Everything produced for one scenario.
pub struct ScenarioOutcome {
    pub patch_size: usize,
    pub index: usize,
    pub scenario: PatchScenario,
    pub solved: SolvedScenario,
}

/// Simulates, solves and scores one scenario.
pub fn run_scenario(
    geometry: &Geometry,
    config: &SweepConfig,
    master_seed: u64,
    patch_size: usize,
    index: usize,
) -> Result<ScenarioOutcome> {
    let seed = scenario_seed(master_seed, patch_size, index);
    let scenario = simulate_scenario(
        &geometry.graph,
        &geometry.leadfield,
        &geometry.noise,
        patch_size,
        &config.scenario,
        seed,
    )?;
    let solved = solve_scenario(
        geometry,
        &config.solvers,
        patch_size,
        index,
        scenario.sources.view(),
        scenario.data.view(),
        scenario.window,
    )?;
    Ok(ScenarioOutcome {
        patch_size,
        index,
        scenario,
        solved,
    })
}

/// Aggregated sweep output in scenario order.
#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub records: Vec<MetricRecord>,
    pub failures: Vec<SolverFailure>,
}

/// Runs every (size, index) scenario in parallel on the current rayon pool.
/// `on_outcome` is called once per scenario as soon as it finishes (in
/// completion order), so callers can stream results to disk; the returned
/// records are in (size, index) order regardless of scheduling.
pub fn run_sweep<F>(geometry: &Geometry, config: &SweepConfig, master_seed: u64, on_outcome: F) -> Result<SweepResult>
where
    F: Fn(&ScenarioOutcome) -> Result<()> + Sync,
{
    config.validate()?;
    let jobs: Vec<(usize, usize)> = config
        .sizes
        .iter()
        .flat_map(|&size| (0..config.n_patches).map(move |i| (size, i)))
        .collect();
    let parts: Vec<Result<(Vec<MetricRecord>, Vec<SolverFailure>)>> = jobs
        .par_iter()
        .map(|&(size, index)| {
            let outcome = run_scenario(geometry, config, master_seed, size, index)?;
            on_outcome(&outcome)?;
            log::info!(
                "scenario size {size} #{index}: {} records, {} failures",
                outcome.solved.records.len(),
                outcome.solved.failures.len()
            );
            Ok((outcome.solved.records, outcome.solved.failures))
        })
        .collect();
    let mut result = SweepResult::default();
    for part in parts {
        let (records, failures) = part?;
        result.records.extend(records);
        result.failures.extend(failures);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ico_graph(sub: u32) -> CorticalGraph {
        CorticalGraph::from_mesh(&generate_icosphere(sub, 0.1).unwrap(), EdgeWeights::Binary)
    }

    #[test]
    fn patches_are_connected() {
        let graph = ico_graph(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(grow_patch(&graph, 7, 1, &mut rng).unwrap(), vec![7]);
        for _ in 0..20 {
            let p = grow_patch(&graph, 11, 10, &mut rng).unwrap();
            assert_eq!(p.len(), 10);
            assert!(p.contains(&11));
            assert!(graph.is_connected_subset(&p));
        }
        let all = grow_patch(&graph, 0, 162, &mut rng).unwrap();
        assert_eq!(all, (0..162).collect::<Vec<_>>());
        assert!(grow_patch(&graph, 0, 163, &mut rng).is_err());
    }

    #[test]
    fn beta_hand_case() {
        let g = array![[2.0]];
        let noise = NoiseModel::new(array![[4.0]]).unwrap();
        let w = array![0.0, 1.0];
        let b = calibrate_beta(g.view(), &[0], &noise, 3.0, w.view()).unwrap();
        assert!((b - 3.0).abs() < 1e-15);
        let b2 = calibrate_beta(g.view(), &[0], &noise, 6.0, w.view()).unwrap();
        assert!((b2 - 2.0 * b).abs() < 1e-15);
        let zero = array![[0.0]];
        assert!(calibrate_beta(zero.view(), &[0], &noise, 3.0, w.view()).is_err());
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(scenario_seed(1, 10, 0), scenario_seed(1, 10, 0));
        assert_ne!(scenario_seed(1, 10, 0), scenario_seed(1, 10, 1));
        assert_ne!(scenario_seed(1, 10, 0), scenario_seed(1, 100, 0));
        assert_ne!(scenario_seed(1, 10, 0), scenario_seed(2, 10, 0));
    }

    #[test]
    fn default_window_is_second_half() {
        let c = ScenarioConfig::default();
        assert_eq!(c.active_window().unwrap(), (50, 99));
        let bad = ScenarioConfig {
            window: Some((10, 100)),
            ..Default::default()
        };
        assert!(bad.active_window().is_err());
    }
}
