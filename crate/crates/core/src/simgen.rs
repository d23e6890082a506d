//! Synthetic data: assortative cores calibrated to a signal exponent,
//! degree draws, clustering draws and Gaussian or Bernoulli observations.

use rand::Rng as _;
use rand_distr::{Distribution, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DtbmError, Result};
use crate::initialize::Observation;
use crate::model::{angle_gap, mean_tensor, Clustering, DtbmParams};
use crate::rng;
use crate::tensor::DenseTensor;

/// Row norm of the core unfolding used by Gaussian simulations unless
/// overridden.
pub const DEFAULT_CORE_ROW_NORM: f64 = 30.0;

/// Largest mean entry allowed in Bernoulli simulations.
pub const BERNOULLI_MAX_MEAN: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DegreeFamily {
    #[default]
    Constant,
    /// `|N(0,1)| + 1 - 1/sqrt(2 pi)`.
    AbsNormal,
    /// Pareto with shape `a > 1` and scale `(a - 1)/a`, so the mean is one.
    Pareto { shape: f64 },
}

impl DegreeFamily {
    pub fn name(&self) -> &'static str {
        match self {
            DegreeFamily::Constant => "constant",
            DegreeFamily::AbsNormal => "abs_normal",
            DegreeFamily::Pareto { .. } => "pareto",
        }
    }

    pub fn shape(&self) -> Option<f64> {
        match self {
            DegreeFamily::Pareto { shape } => Some(*shape),
            _ => None,
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            DegreeFamily::Pareto { shape } if !(*shape > 1.0 && shape.is_finite()) => Err(DtbmError::InvalidParameter(
                format!("pareto shape must exceed 1, got {shape}"),
            )),
            _ => Ok(()),
        }
    }
}

/// How strongly the diagonal of the assortative core stands out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreStrength {
    /// Signal exponent: the angle gap satisfies `Δ² = σ² p^γ`.
    Gamma(f64),
    /// Fixed ratio `s1 / s2`.
    Alpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub p: usize,
    pub order: usize,
    pub r: usize,
    pub strength: CoreStrength,
    /// Gaussian noise level; Bernoulli data use 1/2 regardless.
    pub sigma: f64,
    pub degree: DegreeFamily,
    pub observation: Observation,
    /// Gaussian only: norm of every row of the core unfolding.
    pub core_row_norm: f64,
    /// Share one clustering and one degree vector across modes.
    pub symmetric: bool,
    pub seed: u64,
}

impl SimSpec {
    pub fn gaussian(p: usize, order: usize, r: usize, gamma: f64) -> Self {
        Self {
            p,
            order,
            r,
            strength: CoreStrength::Gamma(gamma),
            sigma: 1.0,
            degree: DegreeFamily::AbsNormal,
            observation: Observation::Gaussian,
            core_row_norm: DEFAULT_CORE_ROW_NORM,
            symmetric: true,
            seed: 0,
        }
    }

    pub fn bernoulli(p: usize, order: usize, r: usize, gamma: f64) -> Self {
        Self {
            observation: Observation::Bernoulli,
            sigma: 0.5,
            ..Self::gaussian(p, order, r, gamma)
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_degree(self, degree: DegreeFamily) -> Self {
        Self { degree, ..self }
    }

    /// Noise level that enters the calibration.
    pub fn effective_sigma(&self) -> f64 {
        match self.observation {
            Observation::Gaussian => self.sigma,
            Observation::Bernoulli => 0.5,
        }
    }

    fn check(&self) -> Result<()> {
        if self.order == 0 || self.r == 0 || self.p < self.r {
            return Err(DtbmError::InvalidParameter(format!(
                "need order >= 1 and p >= r >= 1, got p={} order={} r={}",
                self.p, self.order, self.r
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(DtbmError::InvalidParameter(format!("invalid sigma {}", self.sigma)));
        }
        if !(self.core_row_norm > 0.0 && self.core_row_norm.is_finite()) {
            return Err(DtbmError::InvalidParameter(format!("invalid core row norm {}", self.core_row_norm)));
        }
        if let CoreStrength::Alpha(a) = self.strength {
            if !(a > 1.0 && a.is_finite()) {
                return Err(DtbmError::InvalidParameter(format!("alpha must exceed 1, got {a}")));
            }
        }
        self.degree.check()
    }
}

/// Core with `alpha * s2` on the superdiagonal and `s2` elsewhere.
pub fn assortative_core(r: usize, order: usize, alpha: f64, s2: f64) -> Result<DenseTensor> {
    DenseTensor::from_fn(&vec![r; order], |i| if i.iter().all(|&a| a == i[0]) { alpha * s2 } else { s2 })
}

fn gap_sq(r: usize, order: usize, alpha: f64) -> Result<f64> {
    let g = angle_gap(&assortative_core(r, order, alpha, 1.0)?, 0)?;
    Ok(g * g)
}

/// `alpha` such that the assortative core has `Δ² = σ² p^γ`.
pub fn calibrate_alpha(p: usize, order: usize, r: usize, gamma: f64, sigma: f64) -> Result<f64> {
    if order < 2 || r < 2 {
        return Err(DtbmError::Unreachable(format!(
            "the angle gap of an assortative core cannot be tuned with order {order} and r = {r}"
        )));
    }
    let target = sigma * sigma * (p as f64).powf(gamma);
    if !(target > 0.0 && target < 2.0) {
        return Err(DtbmError::Unreachable(format!(
            "squared angle gap {target} is outside (0, 2)"
        )));
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    while gap_sq(r, order, hi)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e15 {
            return Err(DtbmError::Unreachable(format!("squared angle gap {target} not reached")));
        }
    }
    while (hi - lo) > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if gap_sq(r, order, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let err = (gap_sq(r, order, alpha)? - target).abs();
    if err > 1e-9 {
        return Err(DtbmError::Unreachable(format!(
            "calibration residual {err} for squared angle gap {target}"
        )));
    }
    Ok(alpha)
}

/// Uniform labels, redrawn until every cluster is used. Returns the labels
/// and the number of redraws.
pub fn sample_clustering(p: usize, r: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
    if r == 0 || p < r {
        return Err(DtbmError::InvalidParameter(format!("need p >= r >= 1, got p={p} r={r}")));
    }
    let mut g = rng::rng_from_seed(seed);
    let mut redraws = 0;
    loop {
        let labels: Vec<usize> = (0..p).map(|_| g.random_range(0..r)).collect();
        let mut seen = vec![false; r];
        labels.iter().for_each(|&a| seen[a] = true);
        if seen.iter().all(|&s| s) {
            return Ok((labels, redraws));
        }
        redraws += 1;
    }
}

/// Degree draws rescaled so each cluster's degrees average one.
pub fn sample_theta(labels: &[usize], r: usize, family: DegreeFamily, seed: u64) -> Result<Vec<f64>> {
    family.check()?;
    let mut g = rng::rng_from_seed(seed);
    let raw: Vec<f64> = match family {
        DegreeFamily::Constant => vec![1.0; labels.len()],
        DegreeFamily::AbsNormal => {
            let shift = 1.0 - 1.0 / (2.0 * std::f64::consts::PI).sqrt();
            (0..labels.len())
                .map(|_| {
                    let x: f64 = StandardNormal.sample(&mut g);
                    x.abs() + shift
                })
                .collect()
        }
        DegreeFamily::Pareto { shape } => {
            let dist = Pareto::new((shape - 1.0) / shape, shape)
                .map_err(|e| DtbmError::InvalidParameter(format!("pareto: {e}")))?;
            (0..labels.len()).map(|_| dist.sample(&mut g)).collect()
        }
    };
    Ok(normalize_theta(&raw, labels, r))
}

/// Rescale so that `sum over cluster a of theta = |cluster a|`.
pub fn normalize_theta(theta: &[f64], labels: &[usize], r: usize) -> Vec<f64> {
    let mut sum = vec![0.0; r];
    let mut size = vec![0.0; r];
    for (&a, &t) in labels.iter().zip(theta) {
        sum[a] += t;
        size[a] += 1.0;
    }
    labels.iter().zip(theta).map(|(&a, &t)| t * size[a] / sum[a]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDiagnostics {
    pub alpha: f64,
    pub s2: f64,
    /// Bernoulli means clamped into `[0, 1]`.
    pub clamped_entries: usize,
    /// Per mode, clustering redraws needed to avoid empty clusters.
    pub clustering_redraws: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub y: DenseTensor,
    pub params: DtbmParams,
    pub mean: DenseTensor,
    pub diagnostics: SimDiagnostics,
}

/// Draw a data tensor and its generating parameters.
///
/// Substreams of `spec.seed`: `[0, k]` clustering, `[1, k]` degrees, `[2]`
/// noise. Symmetric specs only use `k = 0`.
pub fn sample_observation(spec: &SimSpec) -> Result<Simulation> {
    spec.check()?;
    let sigma = spec.effective_sigma();
    let alpha = match spec.strength {
        CoreStrength::Alpha(a) => a,
        CoreStrength::Gamma(g) => calibrate_alpha(spec.p, spec.order, spec.r, g, sigma)?,
    };

    let draws = if spec.symmetric { 1 } else { spec.order };
    let mut labels = Vec::with_capacity(draws);
    let mut thetas = Vec::with_capacity(draws);
    let mut redraws = Vec::with_capacity(draws);
    for k in 0..draws {
        let (z, n) = sample_clustering(spec.p, spec.r, rng::derive_seed(spec.seed, &[0, k as u64]))?;
        thetas.push(sample_theta(&z, spec.r, spec.degree, rng::derive_seed(spec.seed, &[1, k as u64]))?);
        labels.push(z);
        redraws.push(n);
    }
    let pick = |k: usize| if spec.symmetric { 0 } else { k };
    let assignments = (0..spec.order).map(|k| labels[pick(k)].clone()).collect();
    let theta: Vec<Vec<f64>> = (0..spec.order).map(|k| thetas[pick(k)].clone()).collect();
    let z = Clustering::new(assignments, vec![spec.r; spec.order])?;

    let s2 = match spec.observation {
        Observation::Gaussian => {
            let off = (spec.r.pow(spec.order as u32 - 1) - 1) as f64;
            spec.core_row_norm / (alpha * alpha + off).sqrt()
        }
        Observation::Bernoulli => {
            // Scale after the degrees are known so no mean exceeds the cap.
            let peak: f64 = theta.iter().map(|t| t.iter().cloned().fold(0.0, f64::max)).product();
            BERNOULLI_MAX_MEAN / (alpha * peak)
        }
    };
    let core = assortative_core(spec.r, spec.order, alpha, s2)?;
    let params = DtbmParams::new(z, core, theta, sigma)?;
    let mean = mean_tensor(&params)?;

    let mut g = rng::substream(spec.seed, &[2]);
    let mut clamped_entries = 0;
    let values: Vec<f64> = match spec.observation {
        Observation::Gaussian => mean
            .values()
            .iter()
            .map(|&x| {
                let e: f64 = StandardNormal.sample(&mut g);
                x + spec.sigma * e
            })
            .collect(),
        Observation::Bernoulli => mean
            .values()
            .iter()
            .map(|&x| {
                if !(0.0..=1.0).contains(&x) {
                    clamped_entries += 1;
                }
                let q = x.clamp(0.0, 1.0);
                if g.random::<f64>() < q {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    };
    let y = DenseTensor::new(mean.dims().to_vec(), values)?;
    Ok(Simulation {
        y,
        params,
        mean,
        diagnostics: SimDiagnostics {
            alpha,
            s2,
            clamped_entries,
            clustering_redraws: redraws,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{snr, validate, ValidationOptions};

    #[test]
    fn small_cores() {
        let c = assortative_core(2, 2, 2.0, 1.0).unwrap();
        assert_eq!(c.values(), &[2.0, 1.0, 1.0, 2.0]);
        assert_eq!(assortative_core(1, 3, 3.0, 0.5).unwrap().values(), &[1.5]);
    }

    #[test]
    fn calibration_inverts_the_gap() {
        let g2 = gap_sq(5, 3, 2.0).unwrap();
        let p = 100usize;
        let gamma = g2.ln() / (p as f64).ln();
        let a = calibrate_alpha(p, 3, 5, gamma, 1.0).unwrap();
        assert!((a - 2.0).abs() < 1e-6);
        let a1 = calibrate_alpha(p, 3, 5, -1.5, 1.0).unwrap();
        let a2 = calibrate_alpha(p, 3, 5, -1.2, 1.0).unwrap();
        assert!(a1 < a2);
        assert!(calibrate_alpha(p, 3, 5, (5.0f64).ln() / (p as f64).ln(), 1.0).is_err());
        assert!(calibrate_alpha(p, 3, 1, -1.0, 1.0).is_err());
    }

    #[test]
    fn generated_params_are_valid_and_calibrated() {
        for degree in [DegreeFamily::Constant, DegreeFamily::AbsNormal, DegreeFamily::Pareto { shape: 3.0 }] {
            let spec = SimSpec::gaussian(40, 3, 3, -1.2).with_degree(degree).with_seed(9);
            let sim = sample_observation(&spec).unwrap();
            let s = snr(&sim.params).unwrap();
            assert!((s / 40f64.powf(-1.2) - 1.0).abs() < 1e-6);
            let report = validate(&sim.params, &ValidationOptions::default());
            assert!(report.check(crate::model::CHECK_NORMALIZATION).unwrap().passed);
            assert!(report.check(crate::model::CHECK_ROW_NORMS).unwrap().passed);
        }
    }

    #[test]
    fn noiseless_and_binary_draws() {
        let spec = SimSpec {
            sigma: 0.0,
            strength: CoreStrength::Alpha(3.0),
            ..SimSpec::gaussian(10, 3, 2, 0.0)
        };
        let sim = sample_observation(&spec).unwrap();
        assert_eq!(sim.y, sim.mean);
        let sim = sample_observation(&SimSpec::bernoulli(12, 3, 2, -0.5).with_degree(DegreeFamily::AbsNormal)).unwrap();
        assert!(sim.y.values().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(sim.diagnostics.clamped_entries, 0);
        let peak = sim.mean.values().iter().cloned().fold(0.0, f64::max);
        assert!(peak <= BERNOULLI_MAX_MEAN + 1e-12);
    }

    #[test]
    fn degrees_average_one_per_cluster() {
        let (z, _) = sample_clustering(50, 4, 1).unwrap();
        let theta = sample_theta(&z, 4, DegreeFamily::Pareto { shape: 2.0 }, 2).unwrap();
        for a in 0..4 {
            let members: Vec<f64> = z.iter().zip(&theta).filter(|(&l, _)| l == a).map(|(_, &t)| t).collect();
            let sum: f64 = members.iter().sum();
            assert!((sum - members.len() as f64).abs() < 1e-10);
        }
        assert!(sample_theta(&z, 4, DegreeFamily::Pareto { shape: 1.0 }, 2).is_err());
    }

    #[test]
    fn same_seed_same_draw() {
        let spec = SimSpec::gaussian(12, 3, 2, -0.5).with_seed(4);
        let a = sample_observation(&spec).unwrap();
        let b = sample_observation(&spec).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.params, b.params);
    }
}
