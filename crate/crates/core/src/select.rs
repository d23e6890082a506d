//! Degree estimation and BIC selection of the number of clusters.

use serde::{Deserialize, Serialize};

use crate::error::{DtbmError, Result};
use crate::initialize::InitOptions;
use crate::linalg::norm;
use crate::model::{weighted_membership, Clustering, FitResult};
use crate::refine::{fit_dtbm, RefineOptions};
use crate::tensor::{reduced_tensor, DenseTensor};
use crate::{par, rng};

/// Estimated degrees of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    /// Sums to one inside every nonempty cluster.
    pub theta: Vec<f64>,
    /// Clusters whose reduced rows were all zero; their degrees are uniform.
    pub degenerate_clusters: Vec<usize>,
}

/// Degrees from the row norms of the mode-`k` reduced tensor, normalized to
/// sum to one inside each cluster.
pub fn estimate_theta(y: &DenseTensor, z: &Clustering, k: usize) -> Result<ThetaEstimate> {
    let rows = reduced_tensor(y, z, k)?.tensor.matricize(k)?;
    let labels = z.labels(k);
    let r = z.num_clusters(k);
    let norms: Vec<f64> = rows.row_iter().map(norm).collect();
    let mut totals = vec![0.0; r];
    let mut sizes = vec![0usize; r];
    for (&a, &n) in labels.iter().zip(&norms) {
        totals[a] += n;
        sizes[a] += 1;
    }
    let degenerate_clusters: Vec<usize> = (0..r).filter(|&a| sizes[a] > 0 && totals[a] == 0.0).collect();
    let theta = labels
        .iter()
        .zip(&norms)
        .map(|(&a, &n)| if totals[a] > 0.0 { n / totals[a] } else { 1.0 / sizes[a] as f64 })
        .collect();
    Ok(ThetaEstimate {
        theta,
        degenerate_clusters,
    })
}

/// Fitted mean `Ŝ x_1 Θ̂_1 M̂_1 .. x_K Θ̂_K M̂_K`, with the unit-sum degrees
/// rescaled to sum to the cluster sizes so that block means equal `Ŝ`.
pub fn fitted_mean(fit: &FitResult) -> Result<DenseTensor> {
    let mut x = fit.core_hat.clone();
    for k in 0..fit.z_hat.order() {
        let labels = fit.z_hat.labels(k);
        let sizes = fit.z_hat.sizes(k);
        let theta: Vec<f64> = labels
            .iter()
            .zip(&fit.theta_hat[k])
            .map(|(&a, &t)| t * sizes[a] as f64)
            .collect();
        x = x.mode_product(&weighted_membership(labels, &theta, fit.z_hat.num_clusters(k)), k)?;
    }
    Ok(x)
}

/// Estimation pipeline used for every candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SelectOptions {
    pub init: InitOptions,
    /// `None` uses [`RefineOptions::for_dims`].
    pub refine: Option<RefineOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicScore {
    pub ranks: Vec<usize>,
    /// `-inf` when the residual is exactly zero.
    pub score: f64,
    pub rss: f64,
    pub penalty: f64,
    pub zero_residual: bool,
    pub fit: FitResult,
}

/// Effective number of parameters of the symmetric model,
/// `r^K + p (ln r + 1) - r`.
pub fn effective_parameters(p: usize, k: usize, r: usize) -> f64 {
    let (p, r) = (p as f64, r as f64);
    r.powi(k as i32) + p * (r.ln() + 1.0) - r
}

/// Per-mode extension: `prod r_k + sum p_k (ln r_k + 1) - sum r_k`.
pub fn effective_parameters_asymmetric(dims: &[usize], ranks: &[usize]) -> f64 {
    let core: f64 = ranks.iter().map(|&r| r as f64).product();
    let membership: f64 = dims
        .iter()
        .zip(ranks)
        .map(|(&p, &r)| p as f64 * ((r as f64).ln() + 1.0) - r as f64)
        .sum();
    core + membership
}

fn score(y: &DenseTensor, ranks: &[usize], penalty: f64, opts: &SelectOptions, seed: u64) -> Result<BicScore> {
    let refine = opts.refine.unwrap_or_else(|| RefineOptions::for_dims(y.dims()));
    let fit = fit_dtbm(y, ranks, &opts.init, &refine, seed)?;
    let resid = y.sub(&fitted_mean(&fit)?)?;
    let rss = resid.values().iter().map(|v| v * v).sum::<f64>();
    let zero_residual = rss == 0.0;
    let score = if zero_residual {
        f64::NEG_INFINITY
    } else {
        y.len() as f64 * rss.ln() + penalty
    };
    Ok(BicScore {
        ranks: ranks.to_vec(),
        score,
        rss,
        penalty,
        zero_residual,
        fit,
    })
}

/// BIC of the symmetric fit with `r` clusters on every mode:
/// `p^K ln(RSS) + p_e(r) K ln p`. Requires a cubical tensor.
pub fn bic(y: &DenseTensor, r: usize, opts: &SelectOptions, seed: u64) -> Result<BicScore> {
    if !y.is_cubical() {
        return Err(DtbmError::Shape(format!(
            "symmetric BIC needs equal dimensions, got {:?}; use bic_asymmetric",
            y.dims()
        )));
    }
    let (p, k) = (y.dims()[0], y.order());
    let penalty = effective_parameters(p, k, r) * k as f64 * (p as f64).ln();
    score(y, &vec![r; k], penalty, opts, seed)
}

/// BIC with per-mode cluster numbers; the penalty is the per-mode parameter
/// count times `sum_k ln p_k`.
pub fn bic_asymmetric(y: &DenseTensor, ranks: &[usize], opts: &SelectOptions, seed: u64) -> Result<BicScore> {
    let log_dims: f64 = y.dims().iter().map(|&p| (p as f64).ln()).sum();
    let penalty = effective_parameters_asymmetric(y.dims(), ranks) * log_dims;
    score(y, ranks, penalty, opts, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub r_hat: usize,
    /// In candidate order.
    pub scores: Vec<BicScore>,
}

/// Candidate with the smallest BIC; ties go to the smaller `r`. Candidate
/// `r` is fitted with seed `derive_seed(seed, [r])`.
pub fn select_r(y: &DenseTensor, candidates: &[usize], opts: &SelectOptions, seed: u64) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(DtbmError::InvalidParameter("no candidate cluster numbers".into()));
    }
    let scores = par::map_range(candidates.len(), |i| {
        let r = candidates[i];
        bic(y, r, opts, rng::derive_seed(seed, &[r as u64]))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let best = scores
        .iter()
        .min_by(|a, b| a.score.total_cmp(&b.score).then(a.ranks[0].cmp(&b.ranks[0])))
        .expect("nonempty candidates");
    Ok(Selection {
        r_hat: best.ranks[0],
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mean_tensor, DtbmParams};

    #[test]
    fn single_cluster_parameter_count() {
        assert_eq!(effective_parameters(80, 3, 1), 80.0);
        assert_eq!(effective_parameters_asymmetric(&[80, 80, 80], &[1, 1, 1]), 1.0 + 3.0 * 80.0 - 3.0);
    }

    #[test]
    fn theta_is_proportional_within_clusters() {
        let labels = vec![0, 0, 0, 1, 1];
        let theta = vec![1.0, 2.0, 3.0, 1.0, 1.0];
        let z = Clustering::symmetric(labels, 2, 3).unwrap();
        let core = DenseTensor::from_fn(&[2, 2, 2], |i| 1.0 + (i[0] + 2 * i[1] + 3 * i[2]) as f64).unwrap();
        // Constructing with unnormalized degrees is fine for this check.
        let params = DtbmParams::new(z.clone(), core, vec![theta; 3], 0.0).unwrap();
        let x = mean_tensor(&params).unwrap();
        let est = estimate_theta(&x, &z, 0).unwrap();
        let expect = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 0.5, 0.5];
        for (a, b) in est.theta.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10);
        }
        let scaled = estimate_theta(&x.scaled(3.5), &z, 0).unwrap();
        for (a, b) in est.theta.iter().zip(&scaled.theta) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_cluster_gets_uniform_degrees() {
        let z = Clustering::symmetric(vec![0, 0, 1], 2, 2).unwrap();
        let y = DenseTensor::zeros(&[3, 3]).unwrap();
        let est = estimate_theta(&y, &z, 0).unwrap();
        assert_eq!(est.theta, vec![0.5, 0.5, 1.0]);
        assert_eq!(est.degenerate_clusters, vec![0, 1]);
    }

    #[test]
    fn noiseless_fit_has_zero_residual() {
        let labels = vec![0, 1, 0, 1, 1, 0];
        let theta = vec![1.2, 0.5, 0.8, 1.0, 1.5, 1.0];
        let z = Clustering::symmetric(labels, 2, 3).unwrap();
        let core = DenseTensor::from_fn(&[2, 2, 2], |i| if i[0] == i[1] && i[1] == i[2] { 3.0 } else { 1.0 }).unwrap();
        let params = DtbmParams::new(z, core, vec![theta; 3], 0.0).unwrap();
        let x = mean_tensor(&params).unwrap();
        let s = bic(&x, 2, &SelectOptions::default(), 1).unwrap();
        assert!(s.rss < 1e-20 * x.frobenius_norm().powi(2) || s.zero_residual);
    }

    #[test]
    fn single_candidate_is_selected() {
        let y = DenseTensor::from_fn(&[5, 5, 5], |i| (i[0] * i[1] + i[2]) as f64 * 0.1 + 0.3).unwrap();
        let sel = select_r(&y, &[2], &SelectOptions::default(), 0).unwrap();
        assert_eq!(sel.r_hat, 2);
        assert!(select_r(&y, &[], &SelectOptions::default(), 0).is_err());
    }
}
