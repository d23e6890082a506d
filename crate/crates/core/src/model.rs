//! Degree-corrected tensor block model parameters.
//!
//! The mean tensor is `X = S x_1 Θ_1 M_1 x_2 .. x_K Θ_K M_K`, i.e.
//! `X(i_1,..,i_K) = S(z_1(i_1),..,z_K(i_K)) * prod_k θ_k(i_k)`.

use serde::{Deserialize, Serialize};

use crate::error::{DtbmError, Result};
use crate::linalg;
use crate::matrix::DenseMatrix;
use crate::tensor::DenseTensor;

/// Per-mode cluster assignments with 0-based labels.
///
/// Labels must be below the mode's cluster count; clusters may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawClustering")]
pub struct Clustering {
    assignments: Vec<Vec<usize>>,
    num_clusters: Vec<usize>,
}

#[derive(Deserialize)]
struct RawClustering {
    assignments: Vec<Vec<usize>>,
    num_clusters: Vec<usize>,
}

impl TryFrom<RawClustering> for Clustering {
    type Error = DtbmError;

    fn try_from(raw: RawClustering) -> Result<Self> {
        Clustering::new(raw.assignments, raw.num_clusters)
    }
}

impl Clustering {
    pub fn new(assignments: Vec<Vec<usize>>, num_clusters: Vec<usize>) -> Result<Self> {
        if assignments.is_empty() || assignments.len() != num_clusters.len() {
            return Err(DtbmError::InvalidClustering(format!(
                "{} assignment vectors for {} cluster counts",
                assignments.len(),
                num_clusters.len()
            )));
        }
        for (mode, (labels, &r)) in assignments.iter().zip(&num_clusters).enumerate() {
            if r == 0 || labels.is_empty() {
                return Err(DtbmError::InvalidClustering(format!(
                    "mode {mode} has no labels or zero clusters"
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&a| a >= r) {
                return Err(DtbmError::InvalidClustering(format!(
                    "mode {mode}: label {bad} not below cluster count {r}"
                )));
            }
        }
        Ok(Self {
            assignments,
            num_clusters,
        })
    }

    /// The same assignment on each of `order` modes.
    pub fn symmetric(labels: Vec<usize>, r: usize, order: usize) -> Result<Self> {
        Self::new(vec![labels; order], vec![r; order])
    }

    pub fn order(&self) -> usize {
        self.assignments.len()
    }

    pub fn labels(&self, mode: usize) -> &[usize] {
        &self.assignments[mode]
    }

    pub fn num_clusters(&self, mode: usize) -> usize {
        self.num_clusters[mode]
    }

    pub fn all_num_clusters(&self) -> &[usize] {
        &self.num_clusters
    }

    pub fn dims(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    pub fn sizes(&self, mode: usize) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters[mode]];
        for &a in &self.assignments[mode] {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn empty_clusters(&self, mode: usize) -> Vec<usize> {
        self.sizes(mode)
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == 0)
            .map(|(a, _)| a)
            .collect()
    }

    /// Total number of label changes relative to `other` across modes.
    pub fn changes_from(&self, other: &Self) -> usize {
        self.assignments
            .iter()
            .zip(&other.assignments)
            .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
            .sum()
    }

    pub fn into_assignments(self) -> Vec<Vec<usize>> {
        self.assignments
    }
}

/// Ground-truth model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtbmParams {
    pub z: Clustering,
    pub core: DenseTensor,
    pub theta: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl DtbmParams {
    /// Check structural consistency. Constraints of the parameter space
    /// (degree positivity, normalization, balance) are reported by
    /// [`validate`] instead, so mixed-sign parameterizations stay expressible.
    pub fn new(z: Clustering, core: DenseTensor, theta: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        if core.order() != z.order() || theta.len() != z.order() {
            return Err(DtbmError::InvalidParameter(format!(
                "clustering has {} modes, core {}, theta {}",
                z.order(),
                core.order(),
                theta.len()
            )));
        }
        for mode in 0..z.order() {
            if core.dims()[mode] != z.num_clusters(mode) {
                return Err(DtbmError::InvalidParameter(format!(
                    "core dimension {} on mode {mode} but {} clusters",
                    core.dims()[mode],
                    z.num_clusters(mode)
                )));
            }
            if theta[mode].len() != z.labels(mode).len() {
                return Err(DtbmError::InvalidParameter(format!(
                    "theta on mode {mode} has length {}, expected {}",
                    theta[mode].len(),
                    z.labels(mode).len()
                )));
            }
            crate::error::check_finite(&theta[mode])?;
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(DtbmError::InvalidParameter(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(Self { z, core, theta, sigma })
    }

    pub fn order(&self) -> usize {
        self.z.order()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.z.dims()
    }

    /// `Θ_k M_k` as a `p_k x r_k` matrix.
    pub fn weighted_membership(&self, mode: usize) -> DenseMatrix {
        weighted_membership(self.z.labels(mode), &self.theta[mode], self.z.num_clusters(mode))
    }
}

pub(crate) fn weighted_membership(labels: &[usize], theta: &[f64], r: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(labels.len(), r);
    for (i, (&a, &t)) in labels.iter().zip(theta).enumerate() {
        m.set(i, a, t);
    }
    m
}

/// Output of a clustering fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub z_hat: Clustering,
    pub core_hat: DenseTensor,
    /// Per mode; sums to one inside each estimated cluster.
    pub theta_hat: Vec<Vec<f64>>,
    pub iterations_run: usize,
    /// Number of assignment changes (all modes) in each sweep.
    pub trace: Vec<usize>,
    /// Per mode, indices whose reduced rows were zero in the last sweep.
    pub degenerate_rows: Vec<Vec<usize>>,
    /// Per mode, clusters left empty by the final assignment.
    pub empty_clusters: Vec<Vec<usize>>,
}

/// Mean tensor `S x_1 Θ_1 M_1 .. x_K Θ_K M_K`.
pub fn mean_tensor(params: &DtbmParams) -> Result<DenseTensor> {
    let factors: Vec<DenseMatrix> = (0..params.order()).map(|k| params.weighted_membership(k)).collect();
    let refs: Vec<(&DenseMatrix, usize)> = factors.iter().enumerate().map(|(k, m)| (m, k)).collect();
    params.core.multilinear_multiply(&refs)
}

/// Minimum distance between normalized rows of `Mat_mode(core)`; 1 when the
/// mode has a single cluster.
pub fn angle_gap(core: &DenseTensor, mode: usize) -> Result<f64> {
    let m = core.matricize(mode)?;
    if m.rows() == 1 {
        return Ok(1.0);
    }
    let rows: Vec<Vec<f64>> = m.row_iter().map(linalg::normalize).collect();
    let mut gap = f64::INFINITY;
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            let d: f64 = rows[a]
                .iter()
                .zip(&rows[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            gap = gap.min(d);
        }
    }
    Ok(gap)
}

/// Smallest angle gap across modes.
pub fn min_angle_gap(core: &DenseTensor) -> Result<f64> {
    (0..core.order()).try_fold(f64::INFINITY, |acc, k| Ok(acc.min(angle_gap(core, k)?)))
}

/// `Δ_min² / σ²`; `+∞` when `σ = 0`.
pub fn snr(params: &DtbmParams) -> Result<f64> {
    let gap = min_angle_gap(&params.core)?;
    if params.sigma == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(gap * gap / (params.sigma * params.sigma))
}

/// Signal exponent `γ = log_p SNR` for cubical models with `p > 1`.
pub fn signal_exponent(params: &DtbmParams) -> Result<Option<f64>> {
    let dims = params.dims();
    let p = dims[0];
    if p < 2 || dims.iter().any(|&d| d != p) {
        return Ok(None);
    }
    let s = snr(params)?;
    Ok(s.is_finite().then(|| s.ln() / (p as f64).ln()))
}

/// Constants of the parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Cluster sizes must lie in `[c1 p / r, c2 p / r]`.
    pub c1: f64,
    pub c2: f64,
    /// Core unfolding row norms must lie in `[c3, c4]`.
    pub c3: f64,
    pub c4: f64,
    /// Largest allowed `max_a ‖θ_a‖ / min_a ‖θ_a‖` (reported only).
    pub balance_ratio: f64,
    pub normalization_tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            c1: 0.3,
            c2: 3.0,
            c3: 0.1,
            c4: 50.0,
            balance_ratio: 1.5,
            normalization_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Whether failure makes the parameters invalid (as opposed to a warning).
    pub required: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    /// All required checks passed.
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.required)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub const CHECK_POSITIVITY: &str = "theta_positive";
pub const CHECK_NORMALIZATION: &str = "theta_l1_normalized";
pub const CHECK_ROW_NORMS: &str = "core_row_norms";
pub const CHECK_CLUSTER_SIZES: &str = "cluster_sizes";
pub const CHECK_ANGLE_GAP: &str = "angle_gap";
pub const CHECK_BALANCE: &str = "degree_balance";

/// Check `params` against the parameter space. Never fails; inspect the report.
pub fn validate(params: &DtbmParams, opts: &ValidationOptions) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, required: bool, detail: String| {
        checks.push(Check {
            name: name.to_string(),
            passed,
            required,
            detail,
        })
    };

    let nonpositive: Vec<String> = (0..params.order())
        .filter_map(|k| {
            let n = params.theta[k].iter().filter(|&&t| t <= 0.0).count();
            (n > 0).then(|| format!("mode {k}: {n} entries"))
        })
        .collect();
    push(CHECK_POSITIVITY, nonpositive.is_empty(), true, nonpositive.join("; "));

    let mut norm_issues = Vec::new();
    let mut size_issues = Vec::new();
    let mut balance_issues = Vec::new();
    for k in 0..params.order() {
        let labels = params.z.labels(k);
        let r = params.z.num_clusters(k);
        let p = labels.len() as f64;
        let sizes = params.z.sizes(k);
        let mut l1 = vec![0.0; r];
        let mut l2 = vec![0.0; r];
        for (&a, &t) in labels.iter().zip(&params.theta[k]) {
            l1[a] += t.abs();
            l2[a] += t * t;
        }
        for a in 0..r {
            let n = sizes[a] as f64;
            if (l1[a] - n).abs() > opts.normalization_tol * n.max(1.0) {
                norm_issues.push(format!("mode {k} cluster {a}: |θ|_1 = {} vs size {n}", l1[a]));
            }
            let (lo, hi) = (opts.c1 * p / r as f64, opts.c2 * p / r as f64);
            if n < lo || n > hi {
                size_issues.push(format!("mode {k} cluster {a}: size {n} outside [{lo}, {hi}]"));
            }
        }
        let norms: Vec<f64> = l2.iter().map(|v| v.sqrt()).collect();
        let max = norms.iter().cloned().fold(0.0, f64::max);
        let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= 0.0 || max / min > opts.balance_ratio {
            balance_issues.push(format!("mode {k}: ratio {}", max / min));
        }
    }
    push(CHECK_NORMALIZATION, norm_issues.is_empty(), true, norm_issues.join("; "));
    push(CHECK_CLUSTER_SIZES, size_issues.is_empty(), true, size_issues.join("; "));

    let mut row_issues = Vec::new();
    let mut gap_issues = Vec::new();
    for k in 0..params.order() {
        match params.core.matricize(k) {
            Ok(m) => {
                for (a, row) in m.row_iter().enumerate() {
                    let n = linalg::norm(row);
                    if n < opts.c3 || n > opts.c4 {
                        row_issues.push(format!("mode {k} row {a}: norm {n}"));
                    }
                }
            }
            Err(e) => row_issues.push(e.to_string()),
        }
        match angle_gap(&params.core, k) {
            Ok(g) if g > 0.0 => {}
            Ok(g) => gap_issues.push(format!("mode {k}: gap {g}")),
            Err(e) => gap_issues.push(e.to_string()),
        }
    }
    push(CHECK_ROW_NORMS, row_issues.is_empty(), true, row_issues.join("; "));
    push(CHECK_ANGLE_GAP, gap_issues.is_empty(), true, gap_issues.join("; "));
    push(CHECK_BALANCE, balance_issues.is_empty(), false, balance_issues.join("; "));

    ValidationReport { checks }
}
