//! Weighted k-means with k-means++ seeding and independent restarts.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{DtbmError, Result};
use crate::matrix::DenseMatrix;
use crate::{par, rng};

/// Points (rows) with nonnegative weights.
#[derive(Debug, Clone)]
pub struct WeightedPoints {
    points: DenseMatrix,
    weights: Vec<f64>,
}

impl WeightedPoints {
    pub fn new(points: DenseMatrix, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != points.rows() {
            return Err(DtbmError::DimensionMismatch(format!(
                "{} weights for {} points",
                weights.len(),
                points.rows()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(DtbmError::InvalidParameter(format!("invalid weight {w}")));
        }
        Ok(Self { points, weights })
    }

    /// Every point with weight one.
    pub fn uniform(points: DenseMatrix) -> Self {
        let n = points.rows();
        Self {
            points,
            weights: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &DenseMatrix {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tolerance: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 100,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `r x dim`.
    pub centroids: DenseMatrix,
    /// `sum_i w_i ‖x_i - c_{label(i)}‖²`.
    pub objective: f64,
    /// Objective after every assignment step of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the smaller index.
fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (a, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (a, d);
        }
    }
    best
}

/// Draw an index with probability proportional to `mass`; `None` if all zero.
fn sample_index(mass: &[f64], rng: &mut rng::Rng) -> Option<usize> {
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for (i, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            if u < m {
                return Some(i);
            }
            u -= m;
        }
    }
    mass.iter().rposition(|&m| m > 0.0)
}

fn seed_centroids(data: &WeightedPoints, r: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let pts = &data.points;
    let first = sample_index(&data.weights, rng).expect("positive weight checked by caller");
    let mut centroids = vec![pts.row(first).to_vec()];
    let mut d2: Vec<f64> = (0..data.len()).map(|i| sq_dist(pts.row(i), &centroids[0])).collect();
    while centroids.len() < r {
        let mass: Vec<f64> = d2.iter().zip(&data.weights).map(|(d, w)| d * w).collect();
        let pick = sample_index(&mass, rng)
            .or_else(|| sample_index(&data.weights, rng))
            .expect("positive weight checked by caller");
        let c = pts.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(pts.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(data: &WeightedPoints, r: usize, opts: &KMeansOptions, rng: &mut rng::Rng) -> KMeansResult {
    let pts = &data.points;
    let n = data.len();
    let dim = pts.cols();
    let mut centroids = seed_centroids(data, r, rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();

    for _ in 0..opts.max_iters.max(1) {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (a, d) = nearest(pts.row(i), &centroids);
            changed |= labels[i] != a;
            labels[i] = a;
            dists[i] = d;
        }
        let objective: f64 = dists.iter().zip(&data.weights).map(|(d, w)| d * w).sum();
        let converged = match history.last() {
            Some(&prev) => !changed || prev - objective <= opts.tolerance * prev,
            None => false,
        };
        history.push(objective);
        if converged {
            break;
        }

        // Weighted means; empty clusters keep their centroid unless reseeded.
        let mut sums = vec![vec![0.0; dim]; r];
        let mut mass = vec![0.0; r];
        for i in 0..n {
            let w = data.weights[i];
            if w == 0.0 {
                continue;
            }
            mass[labels[i]] += w;
            for (s, &x) in sums[labels[i]].iter_mut().zip(pts.row(i)) {
                *s += w * x;
            }
        }
        let mut residual: Vec<f64> = dists.iter().zip(&data.weights).map(|(d, w)| d * w).collect();
        for a in 0..r {
            if mass[a] > 0.0 {
                centroids[a] = sums[a].iter().map(|s| s / mass[a]).collect();
            } else {
                // Reseed with the point of largest weighted residual.
                let (far, _) = residual
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
                centroids[a] = pts.row(far).to_vec();
                residual[far] = 0.0;
            }
        }
    }

    let objective = *history.last().expect("at least one iteration");
    let centroids = DenseMatrix::from_parts(r, dim, centroids.concat());
    KMeansResult {
        labels,
        centroids,
        objective,
        history,
    }
}

/// Weighted k-means: best of `opts.restarts` k-means++/Lloyd runs.
///
/// Restart `j` draws from the substream `(seed, j)`, so restarts are
/// independent of execution order. Ties in the final objective go to the
/// lower restart index.
pub fn weighted_kmeans(data: &WeightedPoints, r: usize, opts: &KMeansOptions, seed: u64) -> Result<KMeansResult> {
    if r == 0 {
        return Err(DtbmError::InvalidParameter("k-means needs at least one cluster".into()));
    }
    if !data.weights.iter().any(|&w| w > 0.0) {
        return Err(DtbmError::InvalidParameter("all k-means weights are zero".into()));
    }
    let runs = par::map_range(opts.restarts.max(1), |j| {
        let mut rng = rng::substream(seed, &[j as u64]);
        lloyd(data, r, opts, &mut rng)
    });
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.objective < best.objective { run } else { best })
        .expect("at least one restart");
    Ok(best)
}

/// Weighted k-means objective of a fixed assignment with optimal centroids.
pub fn assignment_objective(data: &WeightedPoints, labels: &[usize], r: usize) -> f64 {
    let dim = data.points.cols();
    let mut sums = vec![vec![0.0; dim]; r];
    let mut mass = vec![0.0; r];
    for (i, &a) in labels.iter().enumerate() {
        let w = data.weights[i];
        mass[a] += w;
        for (s, &x) in sums[a].iter_mut().zip(data.points.row(i)) {
            *s += w * x;
        }
    }
    let centroids: Vec<Vec<f64>> = sums
        .iter()
        .zip(&mass)
        .map(|(s, &m)| s.iter().map(|v| if m > 0.0 { v / m } else { 0.0 }).collect())
        .collect();
    labels
        .iter()
        .enumerate()
        .map(|(i, &a)| data.weights[i] * sq_dist(data.points.row(i), &centroids[a]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn one_cluster_per_distinct_point_has_zero_objective() {
        let data = WeightedPoints::uniform(points(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 5.0]]));
        let res = weighted_kmeans(&data, 3, &KMeansOptions::default(), 1).unwrap();
        assert_eq!(res.objective, 0.0);
        let mut l = res.labels.clone();
        l.sort_unstable();
        assert_eq!(l, vec![0, 1, 2]);
    }

    #[test]
    fn objective_is_nonincreasing_within_a_restart() {
        let mut rng = rng::rng_from_seed(4);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let weights: Vec<f64> = (0..60).map(|i| 0.5 + (i % 7) as f64).collect();
        let data = WeightedPoints::new(points(&rows), weights).unwrap();
        let res = weighted_kmeans(&data, 4, &KMeansOptions::default(), 9).unwrap();
        assert!(res.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let direct = assignment_objective(&data, &res.labels, 4);
        assert!(direct <= res.objective + 1e-12);
    }

    #[test]
    fn zero_weights_are_rejected() {
        let data = WeightedPoints::new(points(&[vec![1.0], vec![2.0]]), vec![0.0, 0.0]).unwrap();
        assert!(weighted_kmeans(&data, 1, &KMeansOptions::default(), 0).is_err());
        assert!(WeightedPoints::new(points(&[vec![1.0]]), vec![-1.0]).is_err());
        assert!(WeightedPoints::new(points(&[vec![1.0]]), vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn duplicated_point_equals_doubled_weight() {
        let base = vec![vec![0.0, 0.0], vec![0.2, 0.1], vec![3.0, 3.0], vec![3.1, 2.9]];
        let mut dup = base.clone();
        dup.push(base[1].clone());
        let a = WeightedPoints::new(points(&dup), vec![1.0, 0.7, 2.0, 1.0, 0.7]).unwrap();
        let b = WeightedPoints::new(points(&base), vec![1.0, 1.4, 2.0, 1.0]).unwrap();
        let ra = weighted_kmeans(&a, 2, &KMeansOptions::default(), 3).unwrap();
        let rb = weighted_kmeans(&b, 2, &KMeansOptions::default(), 3).unwrap();
        assert!((ra.objective - rb.objective).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_result() {
        let mut rng = rng::rng_from_seed(5);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random::<f64>(); 3]).collect();
        let data = WeightedPoints::uniform(points(&rows));
        let a = weighted_kmeans(&data, 3, &KMeansOptions::default(), 11).unwrap();
        let b = weighted_kmeans(&data, 3, &KMeansOptions::default(), 11).unwrap();
        assert_eq!(a, b);
    }
}
