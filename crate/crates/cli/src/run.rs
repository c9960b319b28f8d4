//! Run directories: a manifest, the resolved config, one JSON + matrix pair
//! per scenario, metric records and reports.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sgw_core::io::{self, Manifest};
use sgw_core::metrics::{MetricRecord, MetricsReport};
use sgw_core::simulation::{
    patch_sources, scenario_seed, simulate_scenario, solve_scenario, Geometry, PatchScenario, ScenarioConfig,
    SolverFailure, SweepResult,
};
use sgw_core::solvers::EstimatorSpec;

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
pub const RECORDS: &str = "records.csv";
pub const FAILURES: &str = "failures.csv";
pub const SCENARIOS: &str = "scenarios";

/// Scenario description stored next to its sensor data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub patch_size: usize,
    pub index: usize,
    pub seed: u64,
    pub beta: f64,
    pub psnr: f64,
    pub n_times: usize,
    pub window: (usize, usize),
    pub patch: Vec<usize>,
}

impl ScenarioMeta {
    fn stem(patch_size: usize, index: usize) -> String {
        format!("size{patch_size}_{index:04}")
    }

    pub fn sources(&self, n_vertices: usize) -> Result<ndarray::Array2<f64>, CliError> {
        let scenario = ScenarioConfig {
            psnr: self.psnr,
            n_times: self.n_times,
            window: Some(self.window),
            noise_scale: 1.0,
        };
        let waveform = scenario.waveform()?;
        Ok(patch_sources(n_vertices, &self.patch, self.beta, waveform.view())?)
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir.join(SCENARIOS)).map_err(|e| CliError::io(dir, e))
}

pub fn write_scenario(dir: &Path, patch_size: usize, index: usize, s: &PatchScenario) -> Result<(), CliError> {
    let stem = ScenarioMeta::stem(patch_size, index);
    let meta = ScenarioMeta {
        patch_size,
        index,
        seed: s.seed,
        beta: s.beta,
        psnr: s.psnr,
        n_times: s.data.ncols(),
        window: s.window,
        patch: s.patch.clone(),
    };
    let base = dir.join(SCENARIOS);
    io::write_json(base.join(format!("{stem}.json")), &meta)?;
    io::write_matrix(base.join(format!("{stem}.mtx")), &s.data)?;
    Ok(())
}

/// Scenario metadata sorted by (size, index).
pub fn list_scenarios(dir: &Path) -> Result<Vec<ScenarioMeta>, CliError> {
    let base = dir.join(SCENARIOS);
    let entries = std::fs::read_dir(&base).map_err(|e| CliError::io(&base, e))?;
    let mut metas = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(&base, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            metas.push(io::read_json::<ScenarioMeta>(&path)?);
        }
    }
    metas.sort_by_key(|m| (m.patch_size, m.index));
    Ok(metas)
}

pub fn read_scenario_data(dir: &Path, meta: &ScenarioMeta) -> Result<ndarray::Array2<f64>, CliError> {
    let stem = ScenarioMeta::stem(meta.patch_size, meta.index);
    Ok(io::read_matrix(dir.join(SCENARIOS).join(format!("{stem}.mtx")))?)
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    records: usize,
    failures: usize,
) -> Result<(), CliError> {
    let mut manifest = Manifest::new(command, config, config.master_seed)?;
    manifest.n_records = records;
    manifest.n_failures = failures;
    io::write_json(dir.join(MANIFEST), &manifest)?;
    io::write_json(dir.join(CONFIG), config)?;
    Ok(())
}

pub fn load_config(dir: &Path) -> Result<RunConfig, CliError> {
    let path = dir.join(CONFIG);
    if !path.is_file() {
        return Err(CliError::Input(format!("{} is not a run directory", dir.display())));
    }
    RunConfig::load(&path)
}

/// Simulates every configured scenario into `dir`.
pub fn simulate(dir: &Path, config: &RunConfig, geometry: &Geometry) -> Result<usize, CliError> {
    create_dir(dir)?;
    let sweep = &config.sweep;
    let jobs: Vec<(usize, usize)> = sweep
        .sizes
        .iter()
        .flat_map(|&size| (0..sweep.n_patches).map(move |i| (size, i)))
        .collect();
    jobs.par_iter().try_for_each(|&(size, index)| {
        let seed = scenario_seed(config.master_seed, size, index);
        let s = simulate_scenario(
            &geometry.graph,
            &geometry.leadfield,
            &geometry.noise,
            size,
            &sweep.scenario,
            seed,
        )?;
        write_scenario(dir, size, index, &s)
    })?;
    write_manifest(dir, "simulate", config, 0, 0)?;
    Ok(jobs.len())
}

/// Solves the stored scenarios with `solvers` and merges the records into
/// the run's CSV files, replacing earlier rows of the same solvers.
pub fn solve(dir: &Path, config: &RunConfig, geometry: &Geometry, solvers: &[EstimatorSpec]) -> Result<SweepResult, CliError> {
    let metas = list_scenarios(dir)?;
    if metas.is_empty() {
        return Err(CliError::Input(format!("no scenarios found in {}", dir.display())));
    }
    let n = geometry.mesh.n_vertices();
    let parts: Vec<Result<(Vec<MetricRecord>, Vec<SolverFailure>), CliError>> = metas
        .par_iter()
        .map(|meta| {
            let data = read_scenario_data(dir, meta)?;
            let sources = meta.sources(n)?;
            let solved = solve_scenario(
                geometry,
                solvers,
                meta.patch_size,
                meta.index,
                sources.view(),
                data.view(),
                meta.window,
            )?;
            Ok((solved.records, solved.failures))
        })
        .collect();
    let mut fresh = SweepResult::default();
    for part in parts {
        let (r, f) = part?;
        fresh.records.extend(r);
        fresh.failures.extend(f);
    }
    let names: Vec<&str> = solvers.iter().map(|s| s.name()).collect();
    let mut records = read_records_if_any(dir)?;
    records.retain(|r| !names.contains(&r.solver.as_str()));
    records.extend(fresh.records);
    let mut failures: Vec<SolverFailure> = match dir.join(FAILURES) {
        p if p.is_file() => io::read_csv(p)?,
        _ => Vec::new(),
    };
    failures.retain(|f| !names.contains(&f.solver.as_str()));
    failures.extend(fresh.failures);
    let order = |name: &str| {
        config
            .sweep
            .solvers
            .iter()
            .position(|s| s.name() == name)
            .unwrap_or(usize::MAX)
    };
    records.sort_by(|a, b| (a.patch_size, a.scenario, order(&a.solver)).cmp(&(b.patch_size, b.scenario, order(&b.solver))));
    failures.sort_by(|a, b| (a.patch_size, a.scenario, order(&a.solver)).cmp(&(b.patch_size, b.scenario, order(&b.solver))));
    let result = SweepResult { records, failures };
    write_results(dir, &result)?;
    write_manifest(dir, "solve", config, result.records.len(), result.failures.len())?;
    Ok(result)
}

pub fn write_results(dir: &Path, result: &SweepResult) -> Result<(), CliError> {
    io::write_records(dir.join(RECORDS), &result.records)?;
    io::write_failures(dir.join(FAILURES), &result.failures)?;
    Ok(())
}

fn read_records_if_any(dir: &Path) -> Result<Vec<MetricRecord>, CliError> {
    let path = dir.join(RECORDS);
    if path.is_file() {
        Ok(io::read_records(path)?)
    } else {
        Ok(Vec::new())
    }
}

/// Output files written by [`report`].
pub struct ReportFiles {
    pub text: PathBuf,
    pub json: PathBuf,
    pub csv: PathBuf,
}

/// Aggregates `records.csv` into aligned text, JSON and CSV summaries.
pub fn report(dir: &Path) -> Result<(MetricsReport, ReportFiles), CliError> {
    let records = read_records_if_any(dir)?;
    if records.is_empty() {
        return Err(CliError::Input(format!("no records found in {}", dir.display())));
    }
    let report = MetricsReport::from_records(&records);
    let files = ReportFiles {
        text: dir.join("report.txt"),
        json: dir.join("summary.json"),
        csv: dir.join("summary.csv"),
    };
    std::fs::write(&files.text, report.to_text()).map_err(|e| CliError::io(&files.text, e))?;
    io::write_json(&files.json, &report)?;
    io::write_csv(&files.csv, &report.to_rows())?;
    Ok((report, files))
}
