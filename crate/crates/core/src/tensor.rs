//! Dense order-K tensors.
//!
//! Storage is row-major: the last index varies fastest. The mode-k
//! unfolding `Mat_k(T)` has `p_k` rows; its columns enumerate the remaining
//! indices `(i_1, .., i_{k-1}, i_{k+1}, .., i_K)` in the same row-major order.
//! Under this convention
//!
//! ```text
//! Mat_k(S x_1 M_1 .. x_K M_K) = M_k Mat_k(S) (M_1 ⊗ .. ⊗ M_{k-1} ⊗ M_{k+1} ⊗ .. ⊗ M_K)^T
//! ```
//!
//! Modes are 0-based throughout the API.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, DtbmError, Result};
use crate::matrix::DenseMatrix;
use crate::model::Clustering;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct DenseTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<RawTensor> for DenseTensor {
    type Error = DtbmError;

    fn try_from(raw: RawTensor) -> Result<Self> {
        DenseTensor::new(raw.dims, raw.values)
    }
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(DtbmError::Shape("tensor order must be at least 1".into()));
    }
    if dims.contains(&0) {
        return Err(DtbmError::Shape(format!("zero dimension in {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| DtbmError::Shape(format!("dimensions {dims:?} overflow")))
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n = check_dims(&dims)?;
        if values.len() != n {
            return Err(DtbmError::Shape(format!(
                "dims {dims:?} need {n} values, got {}",
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { dims, values })
    }

    pub(crate) fn from_parts(dims: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), values.len());
        Self { dims, values }
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: &[usize], value: f64) -> Result<Self> {
        let n = check_dims(dims)?;
        Self::new(dims.to_vec(), vec![value; n])
    }

    /// Build a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let n = check_dims(dims)?;
        let mut idx = vec![0usize; dims.len()];
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f(&idx));
            increment(&mut idx, dims);
        }
        Self::new(dims.to_vec(), values)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Whether every dimension is equal.
    pub fn is_cubical(&self) -> bool {
        self.dims.windows(2).all(|w| w[0] == w[1])
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.dims.len(), "index has wrong order");
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {idx:?} out of bounds for {:?}", self.dims);
            acc * d + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.offset(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_parts(self.dims.clone(), self.values.iter().map(|v| v * c).collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims != other.dims {
            return Err(DtbmError::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_parts(self.dims.clone(), values))
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(DtbmError::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// `(prod of dims before mode, dims[mode], prod of dims after mode)`.
    fn split_at_mode(&self, mode: usize) -> (usize, usize, usize) {
        let left = self.dims[..mode].iter().product();
        let right = self.dims[mode + 1..].iter().product();
        (left, self.dims[mode], right)
    }

    /// Mode-`mode` unfolding.
    pub fn matricize(&self, mode: usize) -> Result<DenseMatrix> {
        self.check_mode(mode)?;
        let (left, pk, right) = self.split_at_mode(mode);
        let cols = left * right;
        let mut out = vec![0.0; pk * cols];
        for l in 0..left {
            for i in 0..pk {
                let src = &self.values[(l * pk + i) * right..(l * pk + i + 1) * right];
                out[i * cols + l * right..i * cols + (l + 1) * right].copy_from_slice(src);
            }
        }
        Ok(DenseMatrix::from_parts(pk, cols, out))
    }

    /// Inverse of [`DenseTensor::matricize`].
    pub fn refold(m: &DenseMatrix, mode: usize, dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        if mode >= dims.len() {
            return Err(DtbmError::ModeOutOfRange {
                mode,
                order: dims.len(),
            });
        }
        let pk = dims[mode];
        if m.rows() != pk || m.rows() * m.cols() != n {
            return Err(DtbmError::Shape(format!(
                "{}x{} matrix cannot be refolded along mode {mode} into {dims:?}",
                m.rows(),
                m.cols()
            )));
        }
        let left: usize = dims[..mode].iter().product();
        let right: usize = dims[mode + 1..].iter().product();
        let cols = m.cols();
        let src = m.values();
        let mut values = vec![0.0; n];
        for l in 0..left {
            for i in 0..pk {
                values[(l * pk + i) * right..(l * pk + i + 1) * right]
                    .copy_from_slice(&src[i * cols + l * right..i * cols + (l + 1) * right]);
            }
        }
        Ok(Self::from_parts(dims.to_vec(), values))
    }

    /// Mode product `self x_mode m`, where `m` is `q x p_mode`.
    pub fn mode_product(&self, m: &DenseMatrix, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let (left, pk, right) = self.split_at_mode(mode);
        if m.cols() != pk {
            return Err(DtbmError::DimensionMismatch(format!(
                "factor for mode {mode} has {} columns but the tensor has dimension {pk}",
                m.cols()
            )));
        }
        let q = m.rows();
        let mut out = vec![0.0; left * q * right];
        let src = &self.values;
        par::for_each_chunk_mut(&mut out, right, |idx, chunk| {
            let (l, a) = (idx / q, idx % q);
            let base = l * pk * right;
            for (i, &w) in m.row(a).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let s = &src[base + i * right..base + (i + 1) * right];
                for (o, &x) in chunk.iter_mut().zip(s) {
                    *o += w * x;
                }
            }
        });
        let mut dims = self.dims.clone();
        dims[mode] = q;
        Ok(Self::from_parts(dims, out))
    }

    /// `self x_{k1} M_1 x_{k2} M_2 ...` applied in the given order.
    pub fn multilinear_multiply(&self, factors: &[(&DenseMatrix, usize)]) -> Result<Self> {
        let mut cur = self.clone();
        for &(m, mode) in factors {
            cur = cur.mode_product(m, mode)?;
        }
        Ok(cur)
    }

    /// Nearly-square unfolding: the first `floor(K/2)` modes index rows and
    /// the remaining modes index columns. Requires a cubical tensor.
    pub fn square_unfold(&self) -> Result<DenseMatrix> {
        if !self.is_cubical() {
            return Err(DtbmError::Shape(format!(
                "square unfolding needs equal dimensions, got {:?}",
                self.dims
            )));
        }
        let (rows, cols) = square_shape(&self.dims);
        // Row-major storage already groups the leading modes as rows.
        Ok(DenseMatrix::from_parts(rows, cols, self.values.clone()))
    }

    /// Inverse of [`DenseTensor::square_unfold`].
    pub fn fold_square(m: &DenseMatrix, dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let (rows, cols) = square_shape(dims);
        if m.shape() != (rows, cols) {
            return Err(DtbmError::Shape(format!(
                "{:?} matrix does not match the square unfolding {rows}x{cols} of {dims:?}",
                m.shape()
            )));
        }
        Ok(Self::from_parts(dims.to_vec(), m.values().to_vec()))
    }

    /// Sum (`average = false`) or mean of slices along `mode` grouped by
    /// `labels`. Output has `num_labels` in place of `p_mode`; groups with no
    /// members are zero.
    fn aggregate_mode(&self, mode: usize, labels: &[usize], num_labels: usize, average: bool) -> Self {
        let (left, pk, right) = self.split_at_mode(mode);
        debug_assert_eq!(labels.len(), pk);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_labels];
        for (i, &a) in labels.iter().enumerate() {
            members[a].push(i);
        }
        let mut out = vec![0.0; left * num_labels * right];
        let src = &self.values;
        par::for_each_chunk_mut(&mut out, right, |idx, chunk| {
            let (l, a) = (idx / num_labels, idx % num_labels);
            let base = l * pk * right;
            for &i in &members[a] {
                let s = &src[base + i * right..base + (i + 1) * right];
                for (o, &x) in chunk.iter_mut().zip(s) {
                    *o += x;
                }
            }
            if average && !members[a].is_empty() {
                let inv = 1.0 / members[a].len() as f64;
                chunk.iter_mut().for_each(|o| *o *= inv);
            }
        });
        let mut dims = self.dims.clone();
        dims[mode] = num_labels;
        Self::from_parts(dims, out)
    }
}

/// Shape of the nearly-square unfolding of a tensor with `dims`.
pub fn square_shape(dims: &[usize]) -> (usize, usize) {
    let split = dims.len() / 2;
    let rows = dims[..split].iter().product();
    let cols = dims[split..].iter().product();
    (rows, cols)
}

/// Advance a row-major multi-index.
pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for k in (0..dims.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Result of averaging a tensor over cluster blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAverage {
    pub tensor: DenseTensor,
    /// Per mode, labels with no members. A block is empty (and zero) when
    /// any of its labels is listed here.
    pub empty_labels: Vec<Vec<usize>>,
}

impl BlockAverage {
    pub fn has_empty_blocks(&self) -> bool {
        self.empty_labels.iter().any(|e| !e.is_empty())
    }

    pub fn is_block_empty(&self, block: &[usize]) -> bool {
        block
            .iter()
            .zip(&self.empty_labels)
            .any(|(a, empty)| empty.contains(a))
    }
}

fn check_clustering_fits(y: &DenseTensor, z: &Clustering) -> Result<()> {
    if z.order() != y.order() {
        return Err(DtbmError::InvalidClustering(format!(
            "clustering covers {} modes, tensor has {}",
            z.order(),
            y.order()
        )));
    }
    for mode in 0..y.order() {
        if z.labels(mode).len() != y.dims()[mode] {
            return Err(DtbmError::InvalidClustering(format!(
                "mode {mode}: {} labels for dimension {}",
                z.labels(mode).len(),
                y.dims()[mode]
            )));
        }
    }
    Ok(())
}

fn empty_labels(z: &Clustering, skip: Option<usize>) -> Vec<Vec<usize>> {
    (0..z.order())
        .map(|mode| {
            if Some(mode) == skip {
                Vec::new()
            } else {
                z.empty_clusters(mode)
            }
        })
        .collect()
}

/// Core estimate: the average of `y` over every block `(a_1, .., a_K)` of
/// the clustering. Empty blocks are zero and reported.
pub fn block_average(y: &DenseTensor, z: &Clustering) -> Result<BlockAverage> {
    check_clustering_fits(y, z)?;
    let mut cur = y.clone();
    for mode in 0..y.order() {
        cur = cur.aggregate_mode(mode, z.labels(mode), z.num_clusters(mode), true);
    }
    Ok(BlockAverage {
        tensor: cur,
        empty_labels: empty_labels(z, None),
    })
}

/// Reduced tensor for `mode`: every mode except `mode` is averaged over
/// clusters, so the output has `p_mode` on `mode` and `r_j` elsewhere.
pub fn reduced_tensor(y: &DenseTensor, z: &Clustering, mode: usize) -> Result<BlockAverage> {
    y.check_mode(mode)?;
    check_clustering_fits(y, z)?;
    let mut cur = y.clone();
    for j in (0..y.order()).filter(|&j| j != mode) {
        cur = cur.aggregate_mode(j, z.labels(j), z.num_clusters(j), true);
    }
    Ok(BlockAverage {
        tensor: cur,
        empty_labels: empty_labels(z, Some(mode)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_tensor(dims: &[usize], seed: u64) -> DenseTensor {
        let mut rng = crate::rng::rng_from_seed(seed);
        DenseTensor::from_fn(dims, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn construction_rejects_invalid_input() {
        assert!(DenseTensor::new(vec![], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(DenseTensor::new(vec![1], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn matricize_follows_index_formula() {
        let t = DenseTensor::from_fn(&[2, 2, 2], |i| (i[0] + 2 * i[1] + 4 * i[2]) as f64).unwrap();
        let m = t.matricize(0).unwrap();
        assert_eq!(m.shape(), (2, 4));
        for i in 0..2 {
            for j in 0..2 {
                for l in 0..2 {
                    assert_eq!(m.get(i, j * 2 + l), (i + 2 * j + 4 * l) as f64);
                }
            }
        }
        let m2 = t.matricize(1).unwrap();
        assert_eq!(m2.get(1, 2 + 1), t.get(&[1, 1, 1]));
        assert_eq!(m2.get(0, 2), t.get(&[1, 0, 0]));
        assert!(t.matricize(3).is_err());
    }

    #[test]
    fn refold_roundtrips_and_checks_shape() {
        let t = random_tensor(&[3, 4, 5], 1);
        for mode in 0..3 {
            let m = t.matricize(mode).unwrap();
            assert_eq!(DenseTensor::refold(&m, mode, t.dims()).unwrap(), t);
        }
        let m = t.matricize(0).unwrap();
        assert!(DenseTensor::refold(&m, 1, t.dims()).is_err());
        let scalar = DenseMatrix::new(1, 1, vec![2.5]).unwrap();
        let s = DenseTensor::refold(&scalar, 0, &[1]).unwrap();
        assert_eq!(s.values(), &[2.5]);
    }

    #[test]
    fn mode_product_matches_entrywise_sum() {
        let s = random_tensor(&[2, 3, 2], 2);
        let mut rng = crate::rng::rng_from_seed(3);
        let m = DenseMatrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0)).unwrap();
        let out = s.mode_product(&m, 1).unwrap();
        assert_eq!(out.dims(), &[2, 4, 2]);
        for a in 0..2 {
            for b in 0..4 {
                for c in 0..2 {
                    let want: f64 = (0..3).map(|j| m.get(b, j) * s.get(&[a, j, c])).sum();
                    assert!((out.get(&[a, b, c]) - want).abs() < 1e-14);
                }
            }
        }
        assert!(s.mode_product(&m, 0).is_err());
    }

    #[test]
    fn square_unfold_shapes() {
        let t2 = random_tensor(&[4, 4], 4);
        assert_eq!(t2.square_unfold().unwrap(), t2.matricize(0).unwrap());
        let t3 = random_tensor(&[4, 4, 4], 5);
        let sq = t3.square_unfold().unwrap();
        assert_eq!(sq.shape(), (4, 16));
        assert_eq!(DenseTensor::fold_square(&sq, t3.dims()).unwrap(), t3);
        let t4 = random_tensor(&[3, 3, 3, 3], 6);
        assert_eq!(t4.square_unfold().unwrap().shape(), (9, 9));
        assert!(random_tensor(&[2, 3], 7).square_unfold().is_err());
    }

    #[test]
    fn block_average_of_constant_is_constant() {
        let y = DenseTensor::filled(&[4, 5, 3], 2.5).unwrap();
        let z = Clustering::new(
            vec![vec![0, 1, 1, 0], vec![2, 0, 1, 1, 2], vec![0, 0, 1]],
            vec![2, 3, 2],
        )
        .unwrap();
        let s = block_average(&y, &z).unwrap();
        assert_eq!(s.tensor.dims(), &[2, 3, 2]);
        assert!(s.tensor.values().iter().all(|&v| (v - 2.5).abs() < 1e-15));
        assert!(!s.has_empty_blocks());
    }

    #[test]
    fn block_average_matches_group_by() {
        let y = random_tensor(&[4, 4, 4], 8);
        let labels = vec![0, 1, 1, 0];
        let z = Clustering::symmetric(labels.clone(), 2, 3).unwrap();
        let s = block_average(&y, &z).unwrap();
        let mut sums = [[[0.0f64; 2]; 2]; 2];
        let mut counts = [[[0usize; 2]; 2]; 2];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    let (a, b, c) = (labels[i], labels[j], labels[k]);
                    sums[a][b][c] += y.get(&[i, j, k]);
                    counts[a][b][c] += 1;
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let want = sums[a][b][c] / counts[a][b][c] as f64;
                    assert!((s.tensor.get(&[a, b, c]) - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn empty_blocks_are_zero_and_flagged() {
        let y = DenseTensor::filled(&[3, 3], 1.0).unwrap();
        let z = Clustering::new(vec![vec![0, 0, 2], vec![1, 1, 1]], vec![3, 2]).unwrap();
        let s = block_average(&y, &z).unwrap();
        assert_eq!(s.empty_labels, vec![vec![1], vec![0]]);
        assert!(s.is_block_empty(&[1, 1]));
        assert!(s.is_block_empty(&[0, 0]));
        assert!(!s.is_block_empty(&[2, 1]));
        assert_eq!(s.tensor.get(&[1, 1]), 0.0);
        assert_eq!(s.tensor.get(&[0, 0]), 0.0);
        assert_eq!(s.tensor.get(&[2, 1]), 1.0);
    }

    #[test]
    fn reduced_tensor_with_singletons_copies_input() {
        let y = random_tensor(&[3, 4, 2], 9);
        let z = Clustering::new(
            vec![vec![0, 0, 1], vec![3, 2, 1, 0], vec![1, 0]],
            vec![2, 4, 2],
        )
        .unwrap();
        let d = reduced_tensor(&y, &z, 0).unwrap();
        assert_eq!(d.tensor.dims(), &[3, 4, 2]);
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..2 {
                    assert_eq!(d.tensor.get(&[i, z.labels(1)[j], z.labels(2)[k]]), y.get(&[i, j, k]));
                }
            }
        }
    }
}
