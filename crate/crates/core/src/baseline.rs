//! Degree-unaware spectral baselines.

use crate::error::Result;
use crate::initialize::check_ranks;
use crate::kmeans::{weighted_kmeans, KMeansOptions, WeightedPoints};
use crate::linalg::{normalize, top_left_singular_vectors};
use crate::matrix::DenseMatrix;
use crate::model::Clustering;
use crate::tensor::DenseTensor;
use crate::{par, rng};

/// Per mode, unweighted k-means on the rows of the top-`r_k` left singular
/// vectors of the unfolding. With `normalized`, rows are scaled to unit
/// norm first.
pub fn hosvd_baseline(y: &DenseTensor, ranks: &[usize], normalized: bool, seed: u64) -> Result<Clustering> {
    check_ranks(y.dims(), ranks)?;
    let labels = par::map_range(y.order(), |k| -> Result<Vec<usize>> {
        let u = top_left_singular_vectors(&y.matricize(k)?, ranks[k])?.left_vectors;
        let points = if normalized {
            let rows: Vec<Vec<f64>> = u.row_iter().map(normalize).collect();
            DenseMatrix::from_rows(&rows)?
        } else {
            u
        };
        let fit = weighted_kmeans(
            &WeightedPoints::uniform(points),
            ranks[k],
            &KMeansOptions::default(),
            rng::derive_seed(seed, &[k as u64]),
        )?;
        Ok(fit.labels)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Clustering::new(labels, ranks.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::cer;
    use crate::model::{mean_tensor, DtbmParams};

    #[test]
    fn separated_noiseless_blocks_are_recovered() {
        let labels = vec![0, 1, 0, 1, 1, 0, 1, 0];
        let core = DenseTensor::from_fn(&[2, 2, 2], |i| if i[0] == i[1] && i[1] == i[2] { 5.0 } else { 1.0 }).unwrap();
        let z = Clustering::symmetric(labels.clone(), 2, 3).unwrap();
        let x = mean_tensor(&DtbmParams::new(z, core, vec![vec![1.0; 8]; 3], 0.0).unwrap()).unwrap();
        for normalized in [false, true] {
            let fit = hosvd_baseline(&x, &[2, 2, 2], normalized, 3).unwrap();
            assert_eq!(cer(fit.labels(1), &labels).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_cluster() {
        let y = DenseTensor::from_fn(&[4, 4], |i| (i[0] + i[1]) as f64).unwrap();
        let fit = hosvd_baseline(&y, &[1, 1], false, 0).unwrap();
        assert!(fit.labels(0).iter().all(|&a| a == 0));
    }
}
