//! Seeded Monte-Carlo sweeps over simulation grids.
//!
//! Every replicate of every grid cell draws its data from
//! `derive_seed(base_seed, [cell, replicate])`, and all methods of that
//! replicate see the same data. Results do not depend on execution order.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::hosvd_baseline;
use crate::error::{DtbmError, Result};
use crate::initialize::{init_clustering, InitOptions, Observation};
use crate::metrics::mode_average;
use crate::model::Clustering;
use crate::refine::{angle_refine, oracle_refine, RefineOptions};
use crate::simgen::{sample_observation, CoreStrength, DegreeFamily, SimSpec, DEFAULT_CORE_ROW_NORM};
use crate::{par, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DtbmInit,
    DtbmFull,
    Oracle,
    Hosvd,
    HosvdPlus,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::DtbmInit, Method::DtbmFull, Method::Oracle, Method::Hosvd, Method::HosvdPlus];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::DtbmInit => "dtbm_init",
            Method::DtbmFull => "dtbm_full",
            Method::Oracle => "oracle",
            Method::Hosvd => "hosvd",
            Method::HosvdPlus => "hosvd_plus",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = DtbmError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| DtbmError::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// Signal exponents, listed or as an inclusive `start..=stop` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaGrid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl GammaGrid {
    /// Grid values rounded to 12 decimals so float steps land on the
    /// intended points.
    pub fn values(&self) -> Result<Vec<f64>> {
        let round = |x: f64| (x * 1e12).round() / 1e12;
        match self {
            GammaGrid::List(v) => Ok(v.iter().map(|&x| round(x)).collect()),
            GammaGrid::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(DtbmError::InvalidParameter(format!(
                        "gamma range needs start <= stop and step > 0, got {start}..{stop} by {step}"
                    )));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                Ok((0..=n).map(|i| round(start + i as f64 * step)).collect())
            }
        }
    }
}

fn default_replicates() -> usize {
    30
}

fn default_sigma() -> f64 {
    1.0
}

fn default_core_row_norm() -> f64 {
    DEFAULT_CORE_ROW_NORM
}

fn default_observation() -> Vec<Observation> {
    vec![Observation::Gaussian]
}

fn default_degree() -> Vec<DegreeFamily> {
    vec![DegreeFamily::AbsNormal]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: Vec<usize>,
    pub order: Vec<usize>,
    pub r: Vec<usize>,
    pub gamma: GammaGrid,
    #[serde(default = "default_observation")]
    pub observation: Vec<Observation>,
    #[serde(default = "default_degree")]
    pub degree: Vec<DegreeFamily>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub methods: Vec<Method>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_core_row_norm")]
    pub core_row_norm: f64,
    #[serde(default = "default_true")]
    pub symmetric: bool,
    /// Where the CLI writes rows; the aggregate goes next to it.
    #[serde(default)]
    pub output: Option<String>,
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub p: usize,
    pub order: usize,
    pub r: usize,
    pub gamma: f64,
    pub observation: Observation,
    pub degree: DegreeFamily,
}

impl ExperimentConfig {
    /// Grid cells, `p` outermost and degree family innermost.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let gammas = self.gamma.values()?;
        let mut cells = Vec::new();
        for &p in &self.p {
            for &order in &self.order {
                for &r in &self.r {
                    for &gamma in &gammas {
                        for &observation in &self.observation {
                            for &degree in &self.degree {
                                cells.push(Cell {
                                    p,
                                    order,
                                    r,
                                    gamma,
                                    observation,
                                    degree,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells()?.is_empty() {
            return Err(DtbmError::InvalidParameter("empty experiment grid".into()));
        }
        if self.replicates == 0 {
            return Err(DtbmError::InvalidParameter("replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(DtbmError::InvalidParameter("no methods".into()));
        }
        Ok(())
    }

    pub fn spec(&self, cell: &Cell, seed: u64) -> SimSpec {
        SimSpec {
            p: cell.p,
            order: cell.order,
            r: cell.r,
            strength: CoreStrength::Gamma(cell.gamma),
            sigma: self.sigma,
            degree: cell.degree,
            observation: cell.observation,
            core_row_norm: self.core_row_norm,
            symmetric: self.symmetric,
            seed,
        }
    }
}

/// One (cell, method, replicate) outcome; serializes to the row CSV layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub p: usize,
    #[serde(rename = "K")]
    pub order: usize,
    pub r: usize,
    pub gamma: f64,
    pub observation: Observation,
    pub degree_family: String,
    pub shape: Option<f64>,
    pub method: Method,
    pub replicate: usize,
    pub seed: u64,
    pub cer: Option<f64>,
    pub ell: Option<f64>,
    pub iterations: usize,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub p: usize,
    #[serde(rename = "K")]
    pub order: usize,
    pub r: usize,
    pub gamma: f64,
    pub observation: Observation,
    pub degree_family: String,
    pub shape: Option<f64>,
    pub method: Method,
    pub replicates: usize,
    pub failures: usize,
    pub cer_mean: f64,
    pub cer_std: f64,
    pub ell_mean: f64,
    pub ell_std: f64,
    pub iterations_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// Cell-major, then replicate, then method in config order.
    pub rows: Vec<ReplicateRow>,
    /// Cell-major, then method.
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentOutput {
    pub fn aggregate(&self, cell_gamma: f64, method: Method) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.gamma == cell_gamma && a.method == method)
    }
}

struct Outcome {
    z: Clustering,
    iterations: usize,
}

fn run_method(
    method: Method,
    y: &crate::tensor::DenseTensor,
    truth: &Clustering,
    cell: &Cell,
    seed: u64,
    init_cache: &mut Option<Clustering>,
) -> Result<Outcome> {
    let ranks = vec![cell.r; cell.order];
    let refine = RefineOptions::for_dims(y.dims());
    let init = |cache: &mut Option<Clustering>| -> Result<Clustering> {
        if let Some(z) = cache {
            return Ok(z.clone());
        }
        let opts = InitOptions::with_observation(cell.observation);
        let z = init_clustering(y, &ranks, &opts, rng::derive_seed(seed, &[0]))?;
        *cache = Some(z.clone());
        Ok(z)
    };
    match method {
        Method::DtbmInit => Ok(Outcome {
            z: init(init_cache)?,
            iterations: 0,
        }),
        Method::DtbmFull => {
            let z0 = init(init_cache)?;
            let fit = angle_refine(y, &z0, &refine.with_seed(rng::derive_seed(seed, &[1])))?;
            Ok(Outcome {
                z: fit.z_hat,
                iterations: fit.iterations_run,
            })
        }
        Method::Oracle => {
            let fit = oracle_refine(y, truth, &refine.with_seed(rng::derive_seed(seed, &[2])))?;
            Ok(Outcome {
                z: fit.z_hat,
                iterations: fit.iterations_run,
            })
        }
        Method::Hosvd | Method::HosvdPlus => Ok(Outcome {
            z: hosvd_baseline(y, &ranks, method == Method::HosvdPlus, rng::derive_seed(seed, &[3]))?,
            iterations: 0,
        }),
    }
}

fn replicate_rows(config: &ExperimentConfig, cell: &Cell, replicate: usize, seed: u64) -> Vec<ReplicateRow> {
    let row = |method: Method| ReplicateRow {
        p: cell.p,
        order: cell.order,
        r: cell.r,
        gamma: cell.gamma,
        observation: cell.observation,
        degree_family: cell.degree.name().to_string(),
        shape: cell.degree.shape(),
        method,
        replicate,
        seed,
        cer: None,
        ell: None,
        iterations: 0,
        wall_ms: 0.0,
        error: None,
    };
    let sim = match sample_observation(&config.spec(cell, seed)) {
        Ok(sim) => sim,
        Err(e) => {
            return config
                .methods
                .iter()
                .map(|&m| ReplicateRow {
                    error: Some(e.to_string()),
                    ..row(m)
                })
                .collect();
        }
    };
    let mut init_cache = None;
    config
        .methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let result = run_method(method, &sim.y, &sim.params.z, cell, seed, &mut init_cache)
                .and_then(|o| Ok((mode_average(&o.z, &sim.params.z)?, o.iterations)));
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            match result {
                Ok((m, iterations)) => ReplicateRow {
                    cer: Some(m.cer),
                    ell: Some(m.ell),
                    iterations,
                    wall_ms,
                    ..row(method)
                },
                Err(e) => ReplicateRow {
                    wall_ms,
                    error: Some(e.to_string()),
                    ..row(method)
                },
            }
        })
        .collect()
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(cell: &Cell, method: Method, rows: &[&ReplicateRow]) -> AggregateRow {
    let ok: Vec<&&ReplicateRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let cers: Vec<f64> = ok.iter().filter_map(|r| r.cer).collect();
    let ells: Vec<f64> = ok.iter().filter_map(|r| r.ell).collect();
    let iters: Vec<f64> = ok.iter().map(|r| r.iterations as f64).collect();
    let (cer_mean, cer_std) = mean_std(&cers);
    let (ell_mean, ell_std) = mean_std(&ells);
    AggregateRow {
        p: cell.p,
        order: cell.order,
        r: cell.r,
        gamma: cell.gamma,
        observation: cell.observation,
        degree_family: cell.degree.name().to_string(),
        shape: cell.degree.shape(),
        method,
        replicates: rows.len(),
        failures: rows.len() - ok.len(),
        cer_mean,
        cer_std,
        ell_mean,
        ell_std,
        iterations_mean: mean_std(&iters).0,
    }
}

/// Run every replicate of every cell. Failures become rows with an error
/// message; the sweep continues.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let cells = config.cells()?;
    let reps = config.replicates;
    let per_task = par::map_range(cells.len() * reps, |t| {
        let (c, rep) = (t / reps, t % reps);
        let seed = rng::derive_seed(config.base_seed, &[c as u64, rep as u64]);
        replicate_rows(config, &cells[c], rep, seed)
    });
    let rows: Vec<ReplicateRow> = per_task.into_iter().flatten().collect();
    let per_cell = reps * config.methods.len();
    let mut aggregates = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let block = &rows[c * per_cell..(c + 1) * per_cell];
        for &method in &config.methods {
            let mine: Vec<&ReplicateRow> = block.iter().filter(|r| r.method == method).collect();
            aggregates.push(aggregate(cell, method, &mine));
        }
    }
    Ok(ExperimentOutput { rows, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        serde_json::from_str(
            r#"{"p":[12],"order":[3],"r":[2],"gamma":{"start":-0.6,"stop":-0.4,"step":0.1},
                "replicates":2,"methods":["dtbm_init","dtbm_full","hosvd"]}"#,
        )
        .unwrap()
    }

    #[test]
    fn gamma_ranges_hit_their_endpoints() {
        let g = GammaGrid::Range {
            start: -2.1,
            stop: -1.4,
            step: 0.1,
        };
        let v = g.values().unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v[0], -2.1);
        assert_eq!(v[7], -1.4);
        assert_eq!(v[3], -1.8);
        assert!(GammaGrid::Range { start: 0.0, stop: 1.0, step: 0.0 }.values().is_err());
    }

    #[test]
    fn rows_and_aggregates_line_up() {
        let cfg = tiny();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 3 * 2 * 3);
        assert_eq!(out.aggregates.len(), 3 * 3);
        for a in &out.aggregates {
            let vals: Vec<f64> = out
                .rows
                .iter()
                .filter(|r| r.gamma == a.gamma && r.method == a.method)
                .map(|r| r.cer.unwrap())
                .collect();
            assert!((a.cer_mean - vals.iter().sum::<f64>() / vals.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn reruns_are_identical_apart_from_timing() {
        let cfg = tiny();
        let strip = |o: ExperimentOutput| {
            o.rows
                .into_iter()
                .map(|r| ReplicateRow { wall_ms: 0.0, ..r })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(run_experiment(&cfg).unwrap()), strip(run_experiment(&cfg).unwrap()));
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let mut cfg = tiny();
        cfg.gamma = GammaGrid::List(vec![5.0]);
        let out = run_experiment(&cfg).unwrap();
        assert!(out.rows.iter().all(|r| r.error.is_some()));
        assert_eq!(out.aggregates[0].failures, 2);
    }
}
