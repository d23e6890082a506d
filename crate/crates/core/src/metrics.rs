//! Clustering accuracy metrics and the degree stability diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{DtbmError, Result};
use crate::model::Clustering;

/// Largest label count solved by enumerating permutations.
pub const ENUMERATION_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclustering {
    /// Fraction of indices mislabeled under the best relabeling.
    pub ell: f64,
    /// `permutation[a]` is the estimated label matched to true label `a`.
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ell: f64,
    pub cer: f64,
    pub best_permutation: Vec<usize>,
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(DtbmError::DimensionMismatch(format!(
            "clusterings of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `counts[b][a] = #{i : z_hat(i) = b, z(i) = a}`, padded to a square
/// `n x n` table with `n` the larger label count.
fn contingency(z_hat: &[usize], z: &[usize]) -> Vec<Vec<u64>> {
    let n = z_hat.iter().chain(z).map(|&a| a + 1).max().unwrap_or(1);
    let mut counts = vec![vec![0u64; n]; n];
    for (&b, &a) in z_hat.iter().zip(z) {
        counts[b][a] += 1;
    }
    counts
}

fn best_by_enumeration(counts: &[Vec<u64>]) -> (u64, Vec<usize>) {
    fn go(a: usize, counts: &[Vec<u64>], used: &mut [bool], cur: &mut Vec<usize>, acc: u64, best: &mut (u64, Vec<usize>)) {
        let n = counts.len();
        if a == n {
            if acc > best.0 || best.1.is_empty() {
                *best = (acc, cur.clone());
            }
            return;
        }
        for b in 0..n {
            if !used[b] {
                used[b] = true;
                cur.push(b);
                go(a + 1, counts, used, cur, acc + counts[b][a], best);
                cur.pop();
                used[b] = false;
            }
        }
    }
    let mut best = (0, Vec::new());
    go(0, counts, &mut vec![false; counts.len()], &mut Vec::new(), 0, &mut best);
    best
}

/// Maximum-weight perfect matching (Hungarian algorithm with potentials).
/// Returns `assign[a] = b` maximizing `sum_a counts[assign[a]][a]`.
fn best_by_hungarian(counts: &[Vec<u64>]) -> (u64, Vec<usize>) {
    let n = counts.len();
    let max = counts.iter().flatten().copied().max().unwrap_or(0) as i64;
    // cost[a][b], rows are true labels; minimize max - count.
    let cost = |a: usize, b: usize| max - counts[b][a] as i64;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    let total = assign.iter().enumerate().map(|(a, &b)| counts[b][a]).sum();
    (total, assign)
}

/// `min over bijections pi of (1/p) #{i : z_hat(i) != pi(z(i))}`.
///
/// Label sets of different sizes are padded with unused labels. Solved by
/// enumeration up to [`ENUMERATION_LIMIT`] labels and by optimal
/// assignment beyond.
pub fn misclustering_error(z_hat: &[usize], z: &[usize]) -> Result<Misclustering> {
    check_lengths(z_hat, z)?;
    if z.is_empty() {
        return Ok(Misclustering {
            ell: 0.0,
            permutation: Vec::new(),
        });
    }
    let counts = contingency(z_hat, z);
    let (agree, permutation) = if counts.len() <= ENUMERATION_LIMIT {
        best_by_enumeration(&counts)
    } else {
        best_by_hungarian(&counts)
    };
    Ok(Misclustering {
        ell: (z.len() as u64 - agree) as f64 / z.len() as f64,
        permutation,
    })
}

/// Clustering error rate: one minus the Rand index over unordered pairs.
pub fn cer(z_hat: &[usize], z: &[usize]) -> Result<f64> {
    check_lengths(z_hat, z)?;
    let n = z.len() as u128;
    if n < 2 {
        return Ok(0.0);
    }
    let pairs = |c: u64| {
        let c = c as u128;
        c * c.saturating_sub(1) / 2
    };
    let counts = contingency(z_hat, z);
    let size = counts.len();
    let both: u128 = counts.iter().flatten().map(|&c| pairs(c)).sum();
    let hat: u128 = counts.iter().map(|row| pairs(row.iter().sum())).sum();
    let truth: u128 = (0..size).map(|a| pairs(counts.iter().map(|row| row[a]).sum())).sum();
    let disagree = hat + truth - 2 * both;
    Ok(disagree as f64 / (n * (n - 1) / 2) as f64)
}

/// Both metrics and the matching relabeling.
pub fn evaluate(z_hat: &[usize], z: &[usize]) -> Result<MetricReport> {
    let m = misclustering_error(z_hat, z)?;
    Ok(MetricReport {
        ell: m.ell,
        cer: cer(z_hat, z)?,
        best_permutation: m.permutation,
    })
}

/// Metrics averaged over modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeAverage {
    pub ell: f64,
    pub cer: f64,
}

pub fn mode_average(z_hat: &Clustering, z: &Clustering) -> Result<ModeAverage> {
    if z_hat.order() != z.order() {
        return Err(DtbmError::DimensionMismatch(format!(
            "clusterings cover {} and {} modes",
            z_hat.order(),
            z.order()
        )));
    }
    let k = z.order() as f64;
    let (mut ell, mut c) = (0.0, 0.0);
    for mode in 0..z.order() {
        let m = evaluate(z_hat.labels(mode), z.labels(mode))?;
        ell += m.ell;
        c += m.cer;
    }
    Ok(ModeAverage { ell: ell / k, cer: c / k })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityDiagnostic {
    /// Sine between raw and degree-weighted cluster sizes of `z_bar`.
    pub sine: f64,
    /// `ell(z_bar, z)`, the neighborhood radius the sine is compared against.
    pub ell: f64,
}

/// Sine between `(|z_bar^{-1}(a)|)_a` and `(sum of theta over z_bar^{-1}(a))_a`.
pub fn stability_diagnostic(z_bar: &[usize], theta: &[f64], z: &[usize]) -> Result<StabilityDiagnostic> {
    check_lengths(z_bar, z)?;
    if theta.len() != z_bar.len() {
        return Err(DtbmError::DimensionMismatch(format!(
            "{} degrees for {} indices",
            theta.len(),
            z_bar.len()
        )));
    }
    let r = z_bar.iter().map(|&a| a + 1).max().unwrap_or(0);
    let mut sizes = vec![0.0; r];
    let mut weighted = vec![0.0; r];
    for (&a, &t) in z_bar.iter().zip(theta) {
        sizes[a] += 1.0;
        weighted[a] += t;
    }
    let dot: f64 = sizes.iter().zip(&weighted).map(|(a, b)| a * b).sum();
    let na = sizes.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = weighted.iter().map(|a| a * a).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(DtbmError::InvalidParameter("sine of a zero vector".into()));
    }
    let cos = (dot / (na * nb)).clamp(-1.0, 1.0);
    Ok(StabilityDiagnostic {
        sine: (1.0 - cos * cos).max(0.0).sqrt(),
        ell: misclustering_error(z_bar, z)?.ell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_relabeled() {
        let z = [0, 0, 1, 1, 2];
        assert_eq!(misclustering_error(&z, &z).unwrap().ell, 0.0);
        let relabeled = [2, 2, 0, 0, 1];
        let m = misclustering_error(&relabeled, &z).unwrap();
        assert_eq!(m.ell, 0.0);
        assert_eq!(m.permutation, vec![2, 0, 1]);
        assert_eq!(cer(&relabeled, &z).unwrap(), 0.0);
    }

    #[test]
    fn hand_checked_rand_index() {
        let c = cer(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap();
        assert!((c - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hungarian_matches_enumeration() {
        let mut s = 12345u64;
        let mut next = |m: usize| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) % m as u64) as usize
        };
        for _ in 0..200 {
            let r = 1 + next(6);
            let p = 1 + next(20);
            let a: Vec<usize> = (0..p).map(|_| next(r)).collect();
            let b: Vec<usize> = (0..p).map(|_| next(r)).collect();
            let counts = contingency(&a, &b);
            assert_eq!(best_by_enumeration(&counts).0, best_by_hungarian(&counts).0);
        }
    }

    #[test]
    fn padding_handles_different_label_counts() {
        let m = misclustering_error(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap();
        assert_eq!(m.ell, 0.5);
        assert!(misclustering_error(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn stability_of_uniform_degrees_is_zero() {
        let z = [0, 0, 1, 1, 1];
        let d = stability_diagnostic(&z, &[1.0; 5], &z).unwrap();
        assert!(d.sine < 1e-7);
        assert_eq!(d.ell, 0.0);
        let d = stability_diagnostic(&z, &[0.5, 1.5, 0.2, 0.3, 2.5], &z).unwrap();
        assert!(d.sine < 1e-7);
        let d = stability_diagnostic(&z, &[0.5, 0.5, 1.0, 1.0, 1.0], &z).unwrap();
        let (u, v) = ([2.0f64, 3.0], [1.0f64, 3.0]);
        let cos = (u[0] * v[0] + u[1] * v[1]) / (u.iter().map(|x| x * x).sum::<f64>().sqrt() * v.iter().map(|x| x * x).sum::<f64>().sqrt());
        assert!((d.sine - (1.0 - cos * cos).sqrt()).abs() < 1e-12);
    }
}
