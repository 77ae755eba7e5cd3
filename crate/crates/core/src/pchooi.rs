//! Coupled higher-order orthogonal iteration.
//!
//! Mode 0 is estimated from the column concatenation `[√ω·mat_0(X ×_{j>0} U_jᵀ), Y]`,
//! every other mode from its projected unfolding as in plain HOOI. The time
//! mode is never compressed. Dropping `Y` gives HOOI on `X`.

use nalgebra::DMatrix;

use crate::data::{hcat, CoupledData};
use crate::error::{PmtcError, Result};
use crate::linalg::{lsvd, subspace_distance, OrthonormalBasis};
use crate::tensor::DenseTensor;

pub const DEFAULT_MAX_ITER: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PchooiOptions {
    /// Tucker ranks of the clustered modes.
    pub ranks: Vec<usize>,
    pub max_iter: usize,
    pub tol: f64,
    /// Weight on the tensor block of the coupled mode.
    pub omega: f64,
    /// Include the outcome panel (when the data has one).
    pub use_outcome: bool,
}

impl PchooiOptions {
    pub fn new(ranks: Vec<usize>) -> Self {
        Self { ranks, max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL, omega: 1.0, use_outcome: true }
    }

    /// Plain HOOI on the tensor.
    pub fn hooi(ranks: Vec<usize>) -> Self {
        Self { use_outcome: false, ..Self::new(ranks) }
    }
}

#[derive(Debug, Clone)]
pub struct PchooiResult {
    pub bases: Vec<OrthonormalBasis>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Stop-rule quantity `max_i ‖U_iU_iᵀ − U_i'U_i'ᵀ‖₂²` per iteration.
    pub history: Vec<f64>,
}

/// The coupled-mode matrix `[√ω·mat_0(t), Y]`, or just `mat_0(t)` without an
/// outcome panel.
pub(crate) fn coupled_unfolding(t: &DenseTensor, y: Option<&DMatrix<f64>>, omega: f64) -> DMatrix<f64> {
    let mut x = t.unfold_first().into_owned();
    match y {
        Some(y) => {
            if omega != 1.0 {
                x *= omega.sqrt();
            }
            hcat(&x, y)
        }
        None => x,
    }
}

/// `X ×_{j ∉ skip} U_jᵀ` over the clustered modes.
pub(crate) fn project_except(x: &DenseTensor, bases: &[DMatrix<f64>], skip: usize) -> Result<DenseTensor> {
    let transposed: Vec<(usize, DMatrix<f64>)> =
        bases.iter().enumerate().filter(|(j, _)| *j != skip).map(|(j, b)| (j, b.transpose())).collect();
    let factors: Vec<(usize, &DMatrix<f64>)> = transposed.iter().map(|(j, m)| (*j, m)).collect();
    x.multi_mode_product(&factors)
}

fn validate(data: &CoupledData, opts: &PchooiOptions) -> Result<()> {
    let d = data.num_modes();
    if opts.ranks.len() != d {
        return Err(PmtcError::ShapeMismatch(format!("{} ranks for {d} clustered modes", opts.ranks.len())));
    }
    for (i, (&m, &p)) in opts.ranks.iter().zip(data.dims()).enumerate() {
        if m == 0 || m > p {
            return Err(PmtcError::InvalidArgument(format!("rank {m} of mode {i} must lie in 1..={p}")));
        }
    }
    if !(opts.omega >= 0.0) || !opts.omega.is_finite() {
        return Err(PmtcError::InvalidArgument(format!("coupling weight must be finite and nonnegative, got {}", opts.omega)));
    }
    if opts.max_iter == 0 {
        return Err(PmtcError::InvalidArgument("max_iter must be positive".into()));
    }
    Ok(())
}

pub fn pchooi(data: &CoupledData, opts: &PchooiOptions) -> Result<PchooiResult> {
    validate(data, opts)?;
    let d = data.num_modes();
    let y = if opts.use_outcome { data.y.as_ref() } else { None };
    let x = &data.x;

    let mut bases: Vec<OrthonormalBasis> = Vec::with_capacity(d);
    bases.push(lsvd(&coupled_unfolding(x, y, opts.omega), opts.ranks[0])?);
    for i in 1..d {
        bases.push(lsvd(&x.matricize(i)?, opts.ranks[i])?);
    }

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations_used = 0;
    for _ in 0..opts.max_iter {
        iterations_used += 1;
        let prev = bases.clone();
        let mut current: Vec<DMatrix<f64>> = bases.iter().map(|b| b.matrix().clone()).collect();
        for i in 0..d {
            // modes before i already hold this iteration's estimates
            let projected = project_except(x, &current, i)?;
            let mat = if i == 0 { coupled_unfolding(&projected, y, opts.omega) } else { projected.matricize(i)? };
            let next = lsvd(&mat, opts.ranks[i])?;
            current[i] = next.matrix().clone();
            bases[i] = next;
        }
        let mut change: f64 = 0.0;
        for (a, b) in bases.iter().zip(&prev) {
            change = change.max(subspace_distance(a, b)?.powi(2));
        }
        history.push(change);
        if change <= opts.tol {
            converged = true;
            break;
        }
    }

    Ok(PchooiResult { bases, iterations_used, converged, history })
}

impl PchooiResult {
    /// `X ×_i U_iU_iᵀ` over the clustered modes.
    pub fn denoised_tensor(&self, x: &DenseTensor) -> Result<DenseTensor> {
        let projectors: Vec<DMatrix<f64>> = self.bases.iter().map(|b| b.projector()).collect();
        let factors: Vec<(usize, &DMatrix<f64>)> = projectors.iter().enumerate().collect();
        x.multi_mode_product(&factors)
    }

    /// `U_0U_0ᵀ Y`.
    pub fn denoised_matrix(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let u = self.bases[0].matrix();
        u * (u.transpose() * y)
    }
}

/// Top-`rank` left singular subspace of the outcome panel alone.
pub fn svd_outcome(data: &CoupledData, rank: usize) -> Result<OrthonormalBasis> {
    let y = data.y.as_ref().ok_or_else(|| PmtcError::InvalidArgument("data has no outcome panel".into()))?;
    lsvd(y, rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn noiseless(seed: u64) -> (CoupledData, Vec<OrthonormalBasis>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p1, p2, t, m1, m2) = (12, 9, 7, 3, 2);
        let u1 = lsvd(&gaussian(p1, m1, &mut rng), m1).unwrap();
        let u2 = lsvd(&gaussian(p2, m2, &mut rng), m2).unwrap();
        let core = DenseTensor::from_fn(&[m1, m2, t], |_| StandardNormal.sample(&mut rng));
        let x = core.mode_product(0, u1.matrix()).unwrap().mode_product(1, u2.matrix()).unwrap();
        let y = u1.matrix() * gaussian(m1, t, &mut rng);
        (CoupledData::new(x, Some(y)).unwrap(), vec![u1, u2])
    }

    #[test]
    fn noiseless_exact_recovery() {
        let (data, truth) = noiseless(1);
        let res = pchooi(&data, &PchooiOptions::new(vec![3, 2])).unwrap();
        assert!(res.converged);
        assert!(res.iterations_used <= 3);
        for (b, u) in res.bases.iter().zip(&truth) {
            assert!(subspace_distance(b, u).unwrap() <= 1e-8);
        }
        // denoised outputs are exact on noiseless input
        let err = res.denoised_tensor(&data.x).unwrap().data().iter().zip(data.x.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        assert!((res.denoised_matrix(data.y.as_ref().unwrap()) - data.y.as_ref().unwrap()).amax() < 1e-10);
    }

    #[test]
    fn full_rank_is_identity_projection() {
        let (data, _) = noiseless(2);
        let res = pchooi(&data, &PchooiOptions::new(vec![12, 9])).unwrap();
        for b in &res.bases {
            assert!((b.projector() - DMatrix::<f64>::identity(b.rows(), b.rows())).amax() < 1e-10);
        }
        let err = res.denoised_tensor(&data.x).unwrap().data().iter().zip(data.x.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn outputs_are_recomputable_from_bases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DenseTensor::from_fn(&[8, 6, 5], |_| StandardNormal.sample(&mut rng));
        let y = gaussian(8, 5, &mut rng);
        let data = CoupledData::new(x, Some(y)).unwrap();
        let res = pchooi(&data, &PchooiOptions::new(vec![2, 2])).unwrap();
        let p0 = res.bases[0].projector();
        let p1 = res.bases[1].projector();
        let again = data.x.mode_product(0, &p0).unwrap().mode_product(1, &p1).unwrap();
        for (a, b) in again.data().iter().zip(res.denoised_tensor(&data.x).unwrap().data()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((&p0 * data.y.as_ref().unwrap() - res.denoised_matrix(data.y.as_ref().unwrap())).amax() < 1e-10);
        assert!(res.history.iter().all(|h| h.is_finite()));
        if res.converged {
            assert!(*res.history.last().unwrap() <= DEFAULT_TOL);
        }
    }

    #[test]
    fn omega_zero_reduces_to_outcome_svd() {
        let (data, _) = noiseless(4);
        let mut opts = PchooiOptions::new(vec![3, 2]);
        opts.omega = 0.0;
        opts.max_iter = 1;
        let res = pchooi(&data, &opts).unwrap();
        let svd_y = svd_outcome(&data, 3).unwrap();
        assert!(subspace_distance(&res.bases[0], &svd_y).unwrap() < 1e-8);
    }

    #[test]
    fn rejects_bad_configuration() {
        let (data, _) = noiseless(5);
        assert!(pchooi(&data, &PchooiOptions::new(vec![3])).is_err());
        assert!(pchooi(&data, &PchooiOptions::new(vec![13, 2])).is_err());
        let mut opts = PchooiOptions::new(vec![3, 2]);
        opts.omega = -1.0;
        assert!(pchooi(&data, &opts).is_err());
    }
}
