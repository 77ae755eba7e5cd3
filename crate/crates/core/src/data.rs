use nalgebra::DMatrix;

use crate::error::{PmtcError, Result};
use crate::tensor::DenseTensor;

/// A characteristics tensor of order `d + 1` (clustered modes, then time)
/// and an optional `p_0 x T` outcome panel sharing the first mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledData {
    pub x: DenseTensor,
    pub y: Option<DMatrix<f64>>,
}

impl CoupledData {
    pub fn new(x: DenseTensor, y: Option<DMatrix<f64>>) -> Result<Self> {
        if x.order() < 2 {
            return Err(PmtcError::ShapeMismatch(format!(
                "characteristics tensor needs at least one clustered mode and a time mode, got order {}",
                x.order()
            )));
        }
        if !x.is_finite() {
            return Err(PmtcError::NonFinite("characteristics tensor"));
        }
        if let Some(y) = &y {
            let t = *x.dims().last().unwrap();
            if y.nrows() != x.dims()[0] || y.ncols() != t {
                return Err(PmtcError::ShapeMismatch(format!(
                    "outcome panel is {}x{}, tensor needs {}x{t}",
                    y.nrows(),
                    y.ncols(),
                    x.dims()[0]
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(PmtcError::NonFinite("outcome panel"));
            }
        }
        Ok(Self { x, y })
    }

    /// Number of clustered modes.
    pub fn num_modes(&self) -> usize {
        self.x.order() - 1
    }

    pub fn periods(&self) -> usize {
        *self.x.dims().last().unwrap()
    }

    pub fn dims(&self) -> &[usize] {
        &self.x.dims()[..self.num_modes()]
    }

    /// The same data without the outcome panel.
    pub fn tensor_only(&self) -> CoupledData {
        CoupledData { x: self.x.clone(), y: None }
    }

    /// Restricts both sources to the periods in `range`.
    pub fn slice_time(&self, range: std::ops::Range<usize>) -> Result<CoupledData> {
        let x = self.x.slice_last(range.clone())?;
        let y = self.y.as_ref().map(|y| y.columns(range.start, range.end - range.start).into_owned());
        Ok(CoupledData { x, y })
    }
}

/// `[a, b]` side by side.
pub(crate) fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Replaces every mode-1 fiber (one characteristic's cross-section at one
/// time, for each index of the other modes) by its ranks scaled into
/// `[0, 1]`. Ties get their average rank; a single entity maps to 0.5.
pub fn rank_normalize(x: &DenseTensor) -> Result<DenseTensor> {
    if !x.is_finite() {
        return Err(PmtcError::NonFinite("characteristics tensor"));
    }
    let p = x.dims()[0];
    let mut out = x.clone();
    let mut order: Vec<usize> = Vec::with_capacity(p);
    for fiber in out.data_mut().chunks_mut(p) {
        if p == 1 {
            fiber[0] = 0.5;
            continue;
        }
        order.clear();
        order.extend(0..p);
        order.sort_by(|&a, &b| fiber[a].total_cmp(&fiber[b]));
        let mut ranks = vec![0.0; p];
        let mut start = 0;
        while start < p {
            let mut end = start + 1;
            while end < p && fiber[order[end]] == fiber[order[start]] {
                end += 1;
            }
            let avg = (start + end - 1) as f64 / 2.0;
            for &k in &order[start..end] {
                ranks[k] = avg / (p - 1) as f64;
            }
            start = end;
        }
        fiber.copy_from_slice(&ranks);
    }
    Ok(out)
}
