//! Angle-based iterative refinement of a clustering.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{DtbmError, Result};
use crate::initialize::{check_ranks, init_clustering, InitOptions};
use crate::linalg::{cosine, norm};
use crate::model::{Clustering, FitResult};
use crate::select::estimate_theta;
use crate::tensor::{block_average, increment, reduced_tensor, DenseTensor};
use crate::{par, rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub max_iters: usize,
    pub stop_on_no_change: bool,
    pub seed: u64,
    /// Reduced rows with norm at most this times the largest are degenerate.
    pub zero_row_tol: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iters: 10,
            stop_on_no_change: true,
            seed: 0,
            zero_row_tol: 1e-12,
        }
    }
}

impl RefineOptions {
    /// Defaults with `max_iters = max(10, ceil(log2 p))`, `p` the largest dimension.
    pub fn for_dims(dims: &[usize]) -> Self {
        let p = dims.iter().copied().max().unwrap_or(1).max(1);
        let log = (p as f64).log2().ceil() as usize;
        Self {
            max_iters: log.max(10),
            ..Self::default()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Copy entries of `prev` into blocks of `core` that had no members.
fn keep_previous_blocks(core: &mut DenseTensor, empty: &[Vec<usize>], prev: &DenseTensor) {
    if empty.iter().all(Vec::is_empty) {
        return;
    }
    let dims = core.dims().to_vec();
    let mut idx = vec![0; dims.len()];
    let mut values = core.values().to_vec();
    for v in values.iter_mut() {
        if idx.iter().zip(empty).any(|(a, e)| e.contains(a)) {
            *v = prev.get(&idx);
        }
        increment(&mut idx, &dims);
    }
    *core = DenseTensor::from_parts(dims, values);
}

struct ModeUpdate {
    labels: Vec<usize>,
    degenerate: Vec<usize>,
}

fn update_mode(y: &DenseTensor, z: &Clustering, core: &DenseTensor, k: usize, opts: &RefineOptions, sweep: usize) -> Result<ModeUpdate> {
    let rows = reduced_tensor(y, z, k)?.tensor.matricize(k)?;
    let centroids = core.matricize(k)?;
    let r = z.num_clusters(k);
    let live: Vec<usize> = (0..r).filter(|&a| norm(centroids.row(a)) > 0.0).collect();
    let norms: Vec<f64> = rows.row_iter().map(norm).collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);

    let mut labels = Vec::with_capacity(rows.rows());
    let mut degenerate = Vec::new();
    for (i, row) in rows.row_iter().enumerate() {
        let zero_row = !(max > 0.0 && norms[i] > opts.zero_row_tol * max);
        if zero_row || live.is_empty() {
            if zero_row {
                degenerate.push(i);
            }
            let mut g = rng::substream(opts.seed, &[sweep as u64, k as u64, i as u64]);
            labels.push(g.random_range(0..r));
            continue;
        }
        let mut best = (live[0], f64::NEG_INFINITY);
        for &a in &live {
            let c = cosine(row, centroids.row(a));
            if c > best.1 {
                best = (a, c);
            }
        }
        labels.push(best.0);
    }
    Ok(ModeUpdate { labels, degenerate })
}

/// Refine `z0` by repeatedly reassigning every index to the core row with
/// the largest cosine to its reduced row. All modes update from the same
/// snapshot in each sweep.
pub fn angle_refine(y: &DenseTensor, z0: &Clustering, opts: &RefineOptions) -> Result<FitResult> {
    if opts.max_iters == 0 {
        return Err(DtbmError::InvalidParameter("refinement needs at least one iteration".into()));
    }
    if z0.dims() != y.dims() {
        return Err(DtbmError::InvalidClustering(format!(
            "clustering dims {:?} do not match tensor dims {:?}",
            z0.dims(),
            y.dims()
        )));
    }
    let mut z = z0.clone();
    let mut prev_core: Option<DenseTensor> = None;
    let mut trace = Vec::new();
    let mut degenerate_rows = vec![Vec::new(); y.order()];

    for sweep in 0..opts.max_iters {
        let avg = block_average(y, &z)?;
        let mut core = avg.tensor;
        if let Some(prev) = &prev_core {
            keep_previous_blocks(&mut core, &avg.empty_labels, prev);
        }
        let updates = par::map_range(y.order(), |k| update_mode(y, &z, &core, k, opts, sweep))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut assignments = Vec::with_capacity(y.order());
        for (k, u) in updates.into_iter().enumerate() {
            degenerate_rows[k] = u.degenerate;
            assignments.push(u.labels);
        }
        let next = Clustering::new(assignments, z.all_num_clusters().to_vec())?;
        let changes = next.changes_from(&z);
        trace.push(changes);
        z = next;
        prev_core = Some(core);
        if changes == 0 && opts.stop_on_no_change {
            break;
        }
    }

    let avg = block_average(y, &z)?;
    let mut core_hat = avg.tensor;
    if let Some(prev) = &prev_core {
        keep_previous_blocks(&mut core_hat, &avg.empty_labels, prev);
    }
    let theta_hat = (0..y.order())
        .map(|k| estimate_theta(y, &z, k).map(|t| t.theta))
        .collect::<Result<_>>()?;
    let empty_clusters = (0..y.order()).map(|k| z.empty_clusters(k)).collect();
    Ok(FitResult {
        z_hat: z,
        core_hat,
        theta_hat,
        iterations_run: trace.len(),
        trace,
        degenerate_rows,
        empty_clusters,
    })
}

/// Core, degrees and empty clusters implied by a fixed clustering, with an
/// empty trace.
pub fn summarize_clustering(y: &DenseTensor, z: &Clustering) -> Result<FitResult> {
    let core_hat = block_average(y, z)?.tensor;
    let theta_hat = (0..y.order())
        .map(|k| estimate_theta(y, z, k).map(|t| t.theta))
        .collect::<Result<_>>()?;
    Ok(FitResult {
        z_hat: z.clone(),
        core_hat,
        theta_hat,
        iterations_run: 0,
        trace: Vec::new(),
        degenerate_rows: vec![Vec::new(); y.order()],
        empty_clusters: (0..y.order()).map(|k| z.empty_clusters(k)).collect(),
    })
}

/// Refinement started from the true clustering.
pub fn oracle_refine(y: &DenseTensor, z_true: &Clustering, opts: &RefineOptions) -> Result<FitResult> {
    angle_refine(y, z_true, opts)
}

/// Initialization followed by refinement. Both stages draw from substreams
/// of `seed`; `refine.seed` is ignored.
pub fn fit_dtbm(y: &DenseTensor, ranks: &[usize], init: &InitOptions, refine: &RefineOptions, seed: u64) -> Result<FitResult> {
    check_ranks(y.dims(), ranks)?;
    let z0 = init_clustering(y, ranks, init, rng::derive_seed(seed, &[0]))?;
    angle_refine(y, &z0, &refine.with_seed(rng::derive_seed(seed, &[1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mean_tensor, DtbmParams};

    fn noiseless() -> (DenseTensor, Clustering) {
        let labels = vec![0, 1, 2, 0, 1, 2, 2, 0, 1];
        let theta = vec![1.1, 0.6, 1.0, 0.9, 1.4, 0.8, 1.2, 1.0, 1.0];
        let core = DenseTensor::from_fn(&[3, 3, 3], |i| if i[0] == i[1] && i[1] == i[2] { 4.0 } else { 1.0 }).unwrap();
        let z = Clustering::symmetric(labels, 3, 3).unwrap();
        let params = DtbmParams::new(z.clone(), core, vec![theta; 3], 0.0).unwrap();
        (mean_tensor(&params).unwrap(), z)
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let (x, z) = noiseless();
        let fit = oracle_refine(&x, &z, &RefineOptions::for_dims(x.dims())).unwrap();
        assert_eq!(fit.z_hat, z);
        assert_eq!(fit.trace, vec![0]);
        assert_eq!(fit.iterations_run, 1);
    }

    #[test]
    fn default_iterations_grow_with_dimension() {
        assert_eq!(RefineOptions::for_dims(&[80, 80, 80]).max_iters, 10);
        assert_eq!(RefineOptions::for_dims(&[5000, 2]).max_iters, 13);
    }

    #[test]
    fn one_wrong_label_is_repaired() {
        let (x, z) = noiseless();
        let mut a = z.clone().into_assignments();
        for labels in a.iter_mut() {
            labels[0] = 2;
        }
        let z0 = Clustering::new(a, vec![3; 3]).unwrap();
        let fit = angle_refine(&x, &z0, &RefineOptions::default()).unwrap();
        assert_eq!(fit.z_hat, z);
        assert_eq!(*fit.trace.last().unwrap(), 0);
    }

    #[test]
    fn pipeline_recovers_noiseless_truth() {
        let (x, z) = noiseless();
        let fit = fit_dtbm(&x, &[3, 3, 3], &InitOptions::default(), &RefineOptions::default(), 5).unwrap();
        let m = crate::metrics::misclustering_error(z.labels(0), fit.z_hat.labels(0)).unwrap();
        assert_eq!(m.ell, 0.0);
    }

    #[test]
    fn mismatched_clustering_is_rejected() {
        let (x, _) = noiseless();
        let z = Clustering::symmetric(vec![0; 4], 1, 3).unwrap();
        assert!(angle_refine(&x, &z, &RefineOptions::default()).is_err());
    }
}
