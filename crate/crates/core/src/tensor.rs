//! Dense tensors stored in first-index-fastest order, with mode-k unfolding,
//! refolding and k-mode products.
//!
//! Modes are 0-based in the API. The mode-k unfolding lays out columns by
//! cycling through the remaining modes starting at k+1 (fastest) and wrapping
//! around: for an order-3 tensor,
//!
//! ```text
//! mat_0(A)[i, j + p1*k] = mat_1(A)[j, k + p2*i] = mat_2(A)[k, i + p0*j] = A[i, j, k]
//! ```
//!
//! Under this storage order, the mode-0 unfolding is a plain reshape of the
//! data buffer (see [`DenseTensor::unfold_first`]).

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use crate::error::{PmtcError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Self { dims: dims.to_vec(), data: vec![0.0; len] }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(PmtcError::ShapeMismatch(format!("dimensions must be positive, got {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(PmtcError::ShapeMismatch(format!(
                "dims {dims:?} need {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { dims: dims.to_vec(), data })
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            for (slot, &d) in idx.iter_mut().zip(dims) {
                *slot += 1;
                if *slot < d {
                    break;
                }
                *slot = 0;
            }
        }
        Self { dims: dims.to_vec(), data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            off += i * stride;
            stride *= d;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.dims != other.dims {
            return Err(PmtcError::ShapeMismatch(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(DenseTensor { dims: self.dims.clone(), data })
    }

    /// Zero-copy mode-0 unfolding, `dims[0] x prod(dims[1..])`.
    pub fn unfold_first(&self) -> DMatrixView<'_, f64> {
        let rows = self.dims[0];
        DMatrixView::from_slice(&self.data, rows, self.data.len() / rows)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(PmtcError::ModeOutOfRange { mode, order: self.order() });
        }
        Ok(())
    }

    /// (product of dims before `mode`, dims[mode], product of dims after `mode`).
    fn split(dims: &[usize], mode: usize) -> (usize, usize, usize) {
        let left = dims[..mode].iter().product();
        let right = dims[mode + 1..].iter().product();
        (left, dims[mode], right)
    }

    /// Mode-`mode` unfolding with the cyclic column order.
    pub fn matricize(&self, mode: usize) -> Result<DMatrix<f64>> {
        self.check_mode(mode)?;
        let (left, pk, right) = Self::split(&self.dims, mode);
        if left == 1 {
            return Ok(DMatrix::from_column_slice(pk, right, &self.data));
        }
        let mut out = DMatrix::zeros(pk, left * right);
        let dst = out.as_mut_slice();
        // out[i, b + right * a] = data[a + left * (i + pk * b)]
        for b in 0..right {
            for i in 0..pk {
                let src = &self.data[left * (i + pk * b)..left * (i + pk * b + 1)];
                for (a, &v) in src.iter().enumerate() {
                    dst[i + pk * (b + right * a)] = v;
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`DenseTensor::matricize`].
    pub fn refold(matrix: &DMatrix<f64>, mode: usize, dims: &[usize]) -> Result<DenseTensor> {
        if mode >= dims.len() {
            return Err(PmtcError::ModeOutOfRange { mode, order: dims.len() });
        }
        let (left, pk, right) = Self::split(dims, mode);
        if matrix.nrows() != pk || matrix.ncols() != left * right {
            return Err(PmtcError::ShapeMismatch(format!(
                "cannot refold {}x{} matrix into mode {mode} of {dims:?}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let src = matrix.as_slice();
        if left == 1 {
            return DenseTensor::from_vec(dims, src.to_vec());
        }
        let mut data = vec![0.0; left * pk * right];
        for b in 0..right {
            for i in 0..pk {
                let dst = &mut data[left * (i + pk * b)..left * (i + pk * b + 1)];
                for (a, slot) in dst.iter_mut().enumerate() {
                    *slot = src[i + pk * (b + right * a)];
                }
            }
        }
        DenseTensor::from_vec(dims, data)
    }

    /// k-mode product `X ×_mode U` with `U` of shape `r x dims[mode]`.
    pub fn mode_product(&self, mode: usize, u: &DMatrix<f64>) -> Result<DenseTensor> {
        self.check_mode(mode)?;
        let (left, pk, right) = Self::split(&self.dims, mode);
        if u.ncols() != pk {
            return Err(PmtcError::ShapeMismatch(format!(
                "mode-{mode} product needs {pk} columns, matrix is {}x{}",
                u.nrows(),
                u.ncols()
            )));
        }
        let r = u.nrows();
        let mut dims = self.dims.clone();
        dims[mode] = r;
        let mut data = vec![0.0; left * r * right];
        if left == 1 {
            let x = DMatrixView::from_slice(&self.data, pk, right);
            let mut out = DMatrixViewMut::from_slice(&mut data, r, right);
            out.gemm(1.0, u, &x, 0.0);
        } else {
            let ut = u.transpose();
            for b in 0..right {
                let x = DMatrixView::from_slice(&self.data[left * pk * b..left * pk * (b + 1)], left, pk);
                let mut out = DMatrixViewMut::from_slice(&mut data[left * r * b..left * r * (b + 1)], left, r);
                out.gemm(1.0, &x, &ut, 0.0);
            }
        }
        Ok(DenseTensor { dims, data })
    }

    /// Applies several mode products in the order given.
    pub fn multi_mode_product(&self, factors: &[(usize, &DMatrix<f64>)]) -> Result<DenseTensor> {
        let Some((&(mode, u), rest)) = factors.split_first() else {
            return Ok(self.clone());
        };
        let mut out = self.mode_product(mode, u)?;
        for &(mode, u) in rest {
            out = out.mode_product(mode, u)?;
        }
        Ok(out)
    }

    /// Sub-tensor keeping indices `range` of the last mode.
    pub fn slice_last(&self, range: std::ops::Range<usize>) -> Result<DenseTensor> {
        let last = *self.dims.last().expect("tensor has at least one mode");
        if range.start >= range.end || range.end > last {
            return Err(PmtcError::InvalidArgument(format!(
                "slice {range:?} out of bounds for last mode of size {last}"
            )));
        }
        let block = self.data.len() / last;
        let data = self.data[block * range.start..block * range.end].to_vec();
        let mut dims = self.dims.clone();
        *dims.last_mut().unwrap() = range.end - range.start;
        DenseTensor::from_vec(&dims, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor::from_fn(dims, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn first_row_of_mode0_unfolding_follows_index_map() {
        // A[i,j,k] = i + 2j + 4k + 1 (0-based), i.e. 1-based i + 2(j-1) + 4(k-1)
        let a = DenseTensor::from_fn(&[2, 2, 2], |ix| (ix[0] + 2 * ix[1] + 4 * ix[2] + 1) as f64);
        let m = a.matricize(0).unwrap();
        let row: Vec<f64> = m.row(0).iter().copied().collect();
        assert_eq!(row, vec![1.0, 3.0, 5.0, 7.0]);
        assert_eq!(m, a.unfold_first().into_owned());
    }

    #[test]
    fn order_one_tensor_unfolds_to_column() {
        let v = DenseTensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let m = v.matricize(0).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (3, 1));
        assert_eq!(m.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn mode1_index_map_exhaustive() {
        let x = random_tensor(&[3, 4, 5], 1);
        let m = x.matricize(1).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..5 {
                    assert_eq!(m[(j, k + 5 * i)], x.get(&[i, j, k]));
                }
            }
        }
    }

    #[test]
    fn mode2_index_map_exhaustive() {
        let x = random_tensor(&[3, 4, 5], 2);
        let m = x.matricize(2).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..5 {
                    assert_eq!(m[(k, i + 3 * j)], x.get(&[i, j, k]));
                }
            }
        }
    }

    #[test]
    fn order4_unfolding_cycles_trailing_modes() {
        let dims = [2, 3, 4, 5];
        let x = random_tensor(&dims, 3);
        let m = x.matricize(2).unwrap();
        // columns enumerate modes 3, 0, 1 with mode 3 fastest
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    for d in 0..5 {
                        assert_eq!(m[(c, d + 5 * (a + 2 * b))], x.get(&[a, b, c, d]));
                    }
                }
            }
        }
    }

    #[test]
    fn refold_round_trips() {
        let x = random_tensor(&[3, 4, 5], 4);
        for mode in 0..3 {
            let m = x.matricize(mode).unwrap();
            assert_eq!(DenseTensor::refold(&m, mode, x.dims()).unwrap(), x);
        }
        let m = DMatrix::from_column_slice(2, 1, &[7.0, 8.0]);
        let t = DenseTensor::refold(&m, 0, &[2, 1, 1]).unwrap();
        assert_eq!(t.data(), &[7.0, 8.0]);
    }

    #[test]
    fn refold_rejects_bad_shape() {
        let m = DMatrix::zeros(3, 4);
        assert!(matches!(DenseTensor::refold(&m, 0, &[3, 5]), Err(PmtcError::ShapeMismatch(_))));
        assert!(matches!(DenseTensor::refold(&m, 2, &[3, 4]), Err(PmtcError::ModeOutOfRange { .. })));
    }

    #[test]
    fn matricize_rejects_bad_mode() {
        let x = random_tensor(&[2, 2], 5);
        assert!(matches!(x.matricize(2), Err(PmtcError::ModeOutOfRange { mode: 2, order: 2 })));
    }

    #[test]
    fn all_ones_product_hand_sum() {
        let x = DenseTensor::from_vec(&[2, 2, 2], vec![1.0; 8]).unwrap();
        let u = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let y = x.mode_product(0, &u).unwrap();
        assert_eq!(y.dims(), &[1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn identity_product_and_commuting_modes() {
        let x = random_tensor(&[3, 4, 5], 6);
        for mode in 0..3 {
            let i = DMatrix::identity(x.dims()[mode], x.dims()[mode]);
            assert_eq!(x.mode_product(mode, &i).unwrap(), x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
        let v = DMatrix::from_fn(6, 4, |_, _| rng.gen_range(-1.0..1.0));
        let a = x.mode_product(0, &u).unwrap().mode_product(1, &v).unwrap();
        let b = x.mode_product(1, &v).unwrap().mode_product(0, &u).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_product_rejects_mismatch() {
        let x = random_tensor(&[3, 4], 8);
        let u = DMatrix::zeros(2, 5);
        assert!(matches!(x.mode_product(1, &u), Err(PmtcError::ShapeMismatch(_))));
    }

    #[test]
    fn slice_last_keeps_time_block() {
        let x = random_tensor(&[2, 3, 4], 9);
        let s = x.slice_last(1..3).unwrap();
        assert_eq!(s.dims(), &[2, 3, 2]);
        assert_eq!(s.get(&[1, 2, 0]), x.get(&[1, 2, 1]));
        assert!(x.slice_last(3..5).is_err());
    }
}
