//! Localization metrics: spatial dispersion at peak time, Wasserstein-1
//! between normalized energy maps, amplitude ratios, and summary tables.

mod transport;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

pub use transport::{sinkhorn, transport, TransportSolution, SUPPORT_EPS};

use crate::error::{Error, Result};

/// `argmax_l max_j |Z_jl|`, earliest index on ties.
pub fn peak_time(z: ArrayView2<f64>) -> Result<usize> {
    if z.ncols() == 0 {
        return Err(Error::param("no time samples"));
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (l, col) in z.columns().into_iter().enumerate() {
        let peak = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > best.0 {
            best = (peak, l);
        }
    }
    Ok(best.1)
}

/// Which vertex anchors the dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakVertex {
    /// Vertex of largest magnitude in the scored column (earliest on ties).
    Estimate,
    /// A given vertex.
    Fixed(usize),
}

/// `√(Σ_k d²_{i,k} S²_{k,t} / Σ_k S²_{k,t})` around the anchor vertex `i`.
pub fn spatial_dispersion(
    s: ArrayView2<f64>,
    t_max: usize,
    distances: ArrayView2<f64>,
    anchor: PeakVertex,
) -> Result<f64> {
    let n = s.nrows();
    if distances.dim() != (n, n) {
        return Err(Error::dims(format!(
            "{}×{} distances for {} vertices",
            distances.nrows(),
            distances.ncols(),
            n
        )));
    }
    if t_max >= s.ncols() {
        return Err(Error::IndexOutOfRange(format!("time {t_max} of {}", s.ncols())));
    }
    let col = s.column(t_max);
    let i_max = match anchor {
        PeakVertex::Estimate => {
            let mut best = (0.0f64, None);
            for (k, &v) in col.iter().enumerate() {
                if v.abs() > best.0 {
                    best = (v.abs(), Some(k));
                }
            }
            best.1.ok_or(Error::NoActivity)?
        }
        PeakVertex::Fixed(k) if k < n => k,
        PeakVertex::Fixed(k) => return Err(Error::IndexOutOfRange(format!("vertex {k} of {n}"))),
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &v) in col.iter().enumerate() {
        let d = distances[[i_max, k]];
        num += d * d * v * v;
        den += v * v;
    }
    if den == 0.0 {
        return Err(Error::NoActivity);
    }
    Ok((num / den).sqrt())
}

/// Per-vertex RMS amplitude over an inclusive time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyMap {
    pub values: Array1<f64>,
    pub window: (usize, usize),
    pub normalized: bool,
}

impl EnergyMap {
    pub fn total(&self) -> f64 {
        self.values.sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.dot(&self.values).sqrt()
    }

    /// Copy with unit total mass.
    pub fn normalize(&self) -> Result<EnergyMap> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::NoActivity);
        }
        Ok(EnergyMap {
            values: &self.values / total,
            window: self.window,
            normalized: true,
        })
    }
}

/// `√(1/(l₁−l₀+1) Σ_{l₀≤l≤l₁} S²_kl)`, optionally scaled to unit mass.
pub fn energy_map(s: ArrayView2<f64>, window: (usize, usize), normalize: bool) -> Result<EnergyMap> {
    let (l0, l1) = window;
    if l0 > l1 || l1 >= s.ncols() {
        return Err(Error::param(format!(
            "window [{l0}, {l1}] outside {} samples",
            s.ncols()
        )));
    }
    let count = (l1 - l0 + 1) as f64;
    let values = s
        .rows()
        .into_iter()
        .map(|r| {
            let e: f64 = r.iter().skip(l0).take(l1 - l0 + 1).map(|v| v * v).sum();
            (e / count).sqrt()
        })
        .collect();
    let map = EnergyMap {
        values,
        window,
        normalized: false,
    };
    if normalize {
        map.normalize()
    } else {
        Ok(map)
    }
}

fn check_normalized(map: &EnergyMap) -> Result<()> {
    if !map.normalized || (map.total() - 1.0).abs() > 1e-9 || map.values.iter().any(|&v| v < 0.0) {
        return Err(Error::param("Wasserstein distance needs normalized energy maps"));
    }
    Ok(())
}

/// Exact Wasserstein-1 distance with ground metric `distances`, together
/// with the optimal plan and its dual certificate.
pub fn wasserstein1_solution(
    mu: &EnergyMap,
    nu: &EnergyMap,
    distances: ArrayView2<f64>,
) -> Result<TransportSolution> {
    check_normalized(mu)?;
    check_normalized(nu)?;
    let n = mu.values.len();
    if nu.values.len() != n || distances.dim() != (n, n) {
        return Err(Error::dims("energy maps and distances disagree in size"));
    }
    let (ia, a) = transport::truncated_support(mu.values.as_slice().expect("contiguous"));
    let (ib, b) = transport::truncated_support(nu.values.as_slice().expect("contiguous"));
    let cost = Array2::from_shape_fn((ia.len(), ib.len()), |(i, k)| distances[[ia[i], ib[k]]]);
    let mut sol = transport(&a, &b, cost.view())?;
    let scale = 1.0 + cost.iter().fold(0.0f64, |m, &c| m.max(c));
    if (sol.cost - sol.dual).abs() > 1e-8 * scale || sol.dual_violation > 1e-8 * scale {
        return Err(Error::Numerical(format!(
            "transport certificate failed: gap {:.2e}, dual violation {:.2e}",
            sol.cost - sol.dual,
            sol.dual_violation
        )));
    }
    for entry in sol.plan.iter_mut() {
        entry.0 = ia[entry.0];
        entry.1 = ib[entry.1];
    }
    Ok(sol)
}

/// Exact Wasserstein-1 distance between normalized energy maps.
pub fn wasserstein1(mu: &EnergyMap, nu: &EnergyMap, distances: ArrayView2<f64>) -> Result<f64> {
    Ok(wasserstein1_solution(mu, nu, distances)?.cost)
}

/// Entropic approximation of [`wasserstein1`]; `epsilon` is relative to the
/// largest ground distance between the supports.
pub fn wasserstein1_sinkhorn(
    mu: &EnergyMap,
    nu: &EnergyMap,
    distances: ArrayView2<f64>,
    epsilon: f64,
) -> Result<f64> {
    check_normalized(mu)?;
    check_normalized(nu)?;
    let (ia, a) = transport::truncated_support(mu.values.as_slice().expect("contiguous"));
    let (ib, b) = transport::truncated_support(nu.values.as_slice().expect("contiguous"));
    let cost = Array2::from_shape_fn((ia.len(), ib.len()), |(i, k)| distances[[ia[i], ib[k]]]);
    sinkhorn(&a, &b, cost.view(), epsilon, 100_000)
}

/// `‖est‖₂ / ‖ref‖₂` on unnormalized maps.
pub fn l2_ratio(estimate: &EnergyMap, reference: &EnergyMap) -> Result<f64> {
    if estimate.values.len() != reference.values.len() {
        return Err(Error::dims("energy maps differ in length"));
    }
    let r = reference.norm();
    if r == 0.0 {
        return Err(Error::NoActivity);
    }
    Ok(estimate.norm() / r)
}

/// Mean, median, population standard deviation and inter-quartile distance
/// (linearly interpolated quartiles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqd: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::param("cannot summarize an empty sample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("cannot summarize non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    Ok(Summary {
        count: sorted.len(),
        mean,
        median: quantile(&sorted, 0.5),
        std: var.sqrt(),
        q1,
        q3,
        iqd: q3 - q1,
    })
}

/// Metrics for one estimate of one scenario. Metrics that are undefined for
/// an estimate with no activity are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub patch_size: usize,
    pub scenario: usize,
    pub solver: String,
    pub sd_ratio: Option<f64>,
    pub wasserstein1: Option<f64>,
    pub l2_ratio: Option<f64>,
    pub sd: Option<f64>,
    pub sd_ref: f64,
    pub t_max: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Inputs shared by every estimate of a scenario.
pub struct Reference<'a> {
    pub sources: ArrayView2<'a, f64>,
    /// Whitened sensor data used for the peak time.
    pub data: ArrayView2<'a, f64>,
    pub window: (usize, usize),
    pub distances: ArrayView2<'a, f64>,
}

/// Scored quantities before they are attached to a record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub sd: Option<f64>,
    pub sd_ref: f64,
    pub sd_ratio: Option<f64>,
    pub wasserstein1: Option<f64>,
    pub l2_ratio: f64,
    pub t_max: usize,
}

/// Scores an estimate against the simulated reference. The reference is
/// constant over its active window, so its dispersion is evaluated at its
/// own peak column.
pub fn score(estimate: ArrayView2<f64>, reference: &Reference) -> Result<Scores> {
    let t_max = peak_time(reference.data)?;
    let t_ref = peak_time(reference.sources)?;
    let sd_ref = spatial_dispersion(reference.sources, t_ref, reference.distances, PeakVertex::Estimate)?;
    let sd = match spatial_dispersion(estimate, t_max, reference.distances, PeakVertex::Estimate) {
        Ok(v) => Some(v),
        Err(Error::NoActivity) => None,
        Err(e) => return Err(e),
    };
    let est_map = energy_map(estimate, reference.window, false)?;
    let ref_map = energy_map(reference.sources, reference.window, false)?;
    let l2 = l2_ratio(&est_map, &ref_map)?;
    let w1 = match est_map.normalize() {
        Ok(mu) => Some(wasserstein1(&mu, &ref_map.normalize()?, reference.distances)?),
        Err(Error::NoActivity) => None,
        Err(e) => return Err(e),
    };
    Ok(Scores {
        sd,
        sd_ref,
        sd_ratio: sd.map(|v| if sd_ref > 0.0 { v / sd_ref } else { f64::NAN }),
        wasserstein1: w1,
        l2_ratio: l2,
        t_max,
    })
}

/// Summary statistics of one solver on one patch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub solver: String,
    pub patch_size: usize,
    pub records: usize,
    pub sd_ratio: Option<Summary>,
    pub wasserstein1: Option<Summary>,
    pub l2_ratio: Option<Summary>,
}

/// One (solver, size, metric) summary as a flat CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub solver: String,
    pub patch_size: usize,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqd: f64,
}

/// Aggregates per solver and patch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub groups: Vec<GroupSummary>,
}

fn finite(values: impl Iterator<Item = Option<f64>>) -> Option<Summary> {
    let v: Vec<f64> = values.flatten().filter(|x| x.is_finite()).collect();
    summarize(&v).ok()
}

impl MetricsReport {
    /// Groups records by (solver, patch size), preserving first-seen solver
    /// order and ascending sizes.
    pub fn from_records(records: &[MetricRecord]) -> Self {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<(usize, usize), Vec<&MetricRecord>> = BTreeMap::new();
        for r in records {
            let idx = match order.iter().position(|s| s == &r.solver) {
                Some(i) => i,
                None => {
                    order.push(r.solver.clone());
                    order.len() - 1
                }
            };
            groups.entry((r.patch_size, idx)).or_default().push(r);
        }
        let groups = groups
            .into_iter()
            .map(|((size, idx), rs)| GroupSummary {
                solver: order[idx].clone(),
                patch_size: size,
                records: rs.len(),
                sd_ratio: finite(rs.iter().map(|r| r.sd_ratio)),
                wasserstein1: finite(rs.iter().map(|r| r.wasserstein1)),
                l2_ratio: finite(rs.iter().map(|r| r.l2_ratio)),
            })
            .collect();
        MetricsReport { groups }
    }

    pub fn group(&self, solver: &str, patch_size: usize) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| g.solver == solver && g.patch_size == patch_size)
    }

    /// Flat rows in group order; metrics without finite values are skipped.
    /// Distances stay in meters.
    pub fn to_rows(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for g in &self.groups {
            for (name, s) in [
                ("sd_ratio", g.sd_ratio),
                ("wasserstein1", g.wasserstein1),
                ("l2_ratio", g.l2_ratio),
            ] {
                if let Some(s) = s {
                    rows.push(SummaryRow {
                        solver: g.solver.clone(),
                        patch_size: g.patch_size,
                        metric: name.to_string(),
                        count: s.count,
                        mean: s.mean,
                        median: s.median,
                        std: s.std,
                        q1: s.q1,
                        q3: s.q3,
                        iqd: s.iqd,
                    });
                }
            }
        }
        rows
    }

    /// Aligned text tables, one per metric, with solvers as rows and
    /// (mean, median, std, IQD) per patch size as columns.
    pub fn to_text(&self) -> String {
        let mut sizes: Vec<usize> = self.groups.iter().map(|g| g.patch_size).collect();
        sizes.sort_unstable();
        sizes.dedup();
        let mut solvers: Vec<&str> = Vec::new();
        for g in &self.groups {
            if !solvers.contains(&g.solver.as_str()) {
                solvers.push(&g.solver);
            }
        }
        let metrics: [(&str, fn(&GroupSummary) -> Option<Summary>); 3] = [
            ("SD_est / SD_ref", |g| g.sd_ratio),
            ("Wasserstein-1 (mm)", |g| g.wasserstein1.map(|s| scale_summary(s, 1e3))),
            ("l2 ratio", |g| g.l2_ratio),
        ];
        let mut out = String::new();
        for (title, get) in metrics {
            let _ = writeln!(out, "{title}");
            let mut header = format!("{:<10}", "solver");
            for size in &sizes {
                let _ = write!(header, " | {:^39}", format!("size {size}"));
            }
            let _ = writeln!(out, "{header}");
            let mut sub = format!("{:<10}", "");
            for _ in &sizes {
                let _ = write!(sub, " | {:>9}{:>10}{:>10}{:>10}", "mean", "median", "std", "IQD");
            }
            let _ = writeln!(out, "{sub}");
            for solver in &solvers {
                let mut line = format!("{solver:<10}");
                for &size in &sizes {
                    match self.group(solver, size).and_then(get) {
                        Some(s) => {
                            let _ = write!(
                                line,
                                " | {:>9.3}{:>10.3}{:>10.3}{:>10.3}",
                                s.mean, s.median, s.std, s.iqd
                            );
                        }
                        None => {
                            let _ = write!(line, " | {:>39}", "-");
                        }
                    }
                }
                let _ = writeln!(out, "{line}");
            }
            out.push('\n');
        }
        out
    }
}

fn scale_summary(s: Summary, c: f64) -> Summary {
    Summary {
        count: s.count,
        mean: s.mean * c,
        median: s.median * c,
        std: s.std * c,
        q1: s.q1 * c,
        q3: s.q3 * c,
        iqd: s.iqd * c,
    }
}

/// Pairwise Euclidean distances between points given as rows.
pub fn pairwise_distances(points: ArrayView2<f64>) -> Array2<f64> {
    let n = points.nrows();
    Array2::from_shape_fn((n, n), |(i, k)| {
        let d: ArrayView1<f64> = points.row(i);
        d.iter()
            .zip(points.row(k))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    })
}
