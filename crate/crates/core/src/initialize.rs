//! Spectral initialization: double-projection denoising (Gaussian data) or
//! square-unfolding truncation (binary data), followed by weighted spherical
//! k-means on the rows of each unfolding.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{DtbmError, Result};
use crate::kmeans::{weighted_kmeans, KMeansOptions, WeightedPoints};
use crate::linalg::{norm, normalize, projector, row_embedding, top_left_singular_vectors};
use crate::matrix::DenseMatrix;
use crate::model::Clustering;
use crate::tensor::{square_shape, DenseTensor};
use crate::{par, rng};

/// Observation model of the data tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Observation {
    #[default]
    Gaussian,
    Bernoulli,
}

impl Observation {
    pub fn as_str(self) -> &'static str {
        match self {
            Observation::Gaussian => "gaussian",
            Observation::Bernoulli => "bernoulli",
        }
    }
}

impl std::str::FromStr for Observation {
    type Err = DtbmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Observation::Gaussian),
            "bernoulli" => Ok(Observation::Bernoulli),
            other => Err(DtbmError::InvalidParameter(format!("unknown observation model {other:?}"))),
        }
    }
}

impl std::fmt::Display for Observation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub(crate) fn check_ranks(dims: &[usize], ranks: &[usize]) -> Result<()> {
    if ranks.len() != dims.len() {
        return Err(DtbmError::DimensionMismatch(format!(
            "{} ranks for an order-{} tensor",
            ranks.len(),
            dims.len()
        )));
    }
    for (&r, &p) in ranks.iter().zip(dims) {
        if r == 0 || r > p {
            return Err(DtbmError::RankOutOfRange { rank: r, max: p });
        }
    }
    Ok(())
}

/// Per-mode orthonormal bases `Û_k` of the double projection.
fn double_projection_bases(y: &DenseTensor, ranks: &[usize]) -> Result<Vec<DenseMatrix>> {
    check_ranks(y.dims(), ranks)?;
    let k_modes = y.order();
    let pre: Vec<DenseMatrix> = (0..k_modes)
        .map(|j| Ok(top_left_singular_vectors(&y.matricize(j)?, ranks[j])?.left_vectors))
        .collect::<Result<_>>()?;
    (0..k_modes)
        .map(|k| {
            // Projecting with U Uᵀ or compressing with Uᵀ leaves the mode-k
            // left singular vectors unchanged; compressing is cheaper.
            let mut t = y.clone();
            for (j, u) in pre.iter().enumerate() {
                if j != k {
                    t = t.mode_product(&u.transpose(), j)?;
                }
            }
            Ok(top_left_singular_vectors(&t.matricize(k)?, ranks[k])?.left_vectors)
        })
        .collect()
}

/// Double-projection denoiser: `Y x_1 Û_1Û_1ᵀ .. x_K Û_KÛ_Kᵀ`, where `Û_k`
/// spans the top `r_k` left singular vectors of the mode-`k` unfolding of
/// `Y` already projected on every other mode.
pub fn double_projection_denoise(y: &DenseTensor, ranks: &[usize]) -> Result<DenseTensor> {
    let bases = double_projection_bases(y, ranks)?;
    let mut x = y.clone();
    for (k, u) in bases.iter().enumerate() {
        x = x.mode_product(&projector(u), k)?;
    }
    Ok(x)
}

/// Rank used for the square-unfolding truncation: the product of the
/// `ceil(K/2)` largest ranks, capped by the unfolding shape.
pub fn square_rank(dims: &[usize], ranks: &[usize]) -> usize {
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let take = dims.len().div_ceil(2);
    let r: usize = sorted.iter().take(take).product();
    let (rows, cols) = square_shape(dims);
    r.min(rows).min(cols).max(1)
}

/// Binary-data denoiser: best low-rank approximation of the square
/// unfolding, folded back into a tensor.
pub fn bernoulli_denoise(y: &DenseTensor, ranks: &[usize]) -> Result<DenseTensor> {
    check_ranks(y.dims(), ranks)?;
    let m = y.square_unfold()?;
    let u = top_left_singular_vectors(&m, square_rank(y.dims(), ranks))?.left_vectors;
    let approx = u.matmul(&u.transpose().matmul(&m)?)?;
    DenseTensor::fold_square(&approx, y.dims())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitOptions {
    pub observation: Observation,
    pub kmeans: KMeansOptions,
    /// Rows with norm at most this times the largest row norm are degenerate.
    pub zero_row_tol: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            observation: Observation::Gaussian,
            kmeans: KMeansOptions::default(),
            zero_row_tol: 1e-12,
        }
    }
}

impl InitOptions {
    pub fn with_observation(observation: Observation) -> Self {
        Self {
            observation,
            ..Self::default()
        }
    }
}

/// Rows with the same Gram matrix as the mode-`k` unfoldings of the
/// denoised tensor, one matrix per mode.
fn denoised_row_embeddings(y: &DenseTensor, ranks: &[usize], observation: Observation) -> Result<Vec<DenseMatrix>> {
    match observation {
        Observation::Gaussian => {
            let bases = double_projection_bases(y, ranks)?;
            // Mat_k(X̂) = Û_k Mat_k(C) Wᵀ with C = Y x_j Û_jᵀ and W orthonormal.
            let mut c = y.clone();
            for (j, u) in bases.iter().enumerate() {
                c = c.mode_product(&u.transpose(), j)?;
            }
            bases
                .iter()
                .enumerate()
                .map(|(k, u)| u.matmul(&c.matricize(k)?))
                .collect()
        }
        Observation::Bernoulli => {
            let x = bernoulli_denoise(y, ranks)?;
            (0..y.order()).map(|k| row_embedding(&x.matricize(k)?)).collect()
        }
    }
}

/// Weighted spherical k-means on the rows of `rows`: degenerate rows get
/// uniform random labels from per-row substreams, the rest are normalized
/// and clustered with weights equal to their squared norms.
pub(crate) fn spherical_cluster(
    rows: &DenseMatrix,
    r: usize,
    kmeans: &KMeansOptions,
    zero_row_tol: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    let norms: Vec<f64> = rows.row_iter().map(norm).collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let live: Vec<usize> = (0..rows.rows()).filter(|&i| max > 0.0 && norms[i] > zero_row_tol * max).collect();
    let mut labels: Vec<usize> = (0..rows.rows())
        .map(|i| rng::substream(seed, &[1, i as u64]).random_range(0..r))
        .collect();
    if live.is_empty() {
        return Ok(labels);
    }
    let unit: Vec<Vec<f64>> = live.iter().map(|&i| normalize(rows.row(i))).collect();
    let weights = live.iter().map(|&i| norms[i] * norms[i]).collect();
    let data = WeightedPoints::new(DenseMatrix::from_rows(&unit)?, weights)?;
    let fit = weighted_kmeans(&data, r, kmeans, rng::derive_seed(seed, &[0]))?;
    for (&i, &a) in live.iter().zip(&fit.labels) {
        labels[i] = a;
    }
    Ok(labels)
}

/// Initial clustering of every mode of `y`.
pub fn init_clustering(y: &DenseTensor, ranks: &[usize], opts: &InitOptions, seed: u64) -> Result<Clustering> {
    check_ranks(y.dims(), ranks)?;
    let embeddings = denoised_row_embeddings(y, ranks, opts.observation)?;
    let labels = par::map_range(y.order(), |k| {
        spherical_cluster(
            &embeddings[k],
            ranks[k],
            &opts.kmeans,
            opts.zero_row_tol,
            rng::derive_seed(seed, &[k as u64]),
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Clustering::new(labels, ranks.to_vec())
}
