//! Monte Carlo data generation.
//!
//! Three generators are provided:
//! - [`gen_pmtc`]: the coupled block model with a group factor structure on
//!   the outcome panel, normalized to target separation-to-noise ratios;
//! - [`gen_tensor_block`]: the plain Gaussian tensor block model;
//! - [`gen_subspace`]: the low-rank coupled Tucker model used to compare
//!   subspace estimators.
//!
//! Every generator is a pure function of its design (including the seed).

use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::CoupledData;
use crate::error::{PmtcError, Result};
use crate::linalg::{lsvd, singular_values, OrthonormalBasis};
use crate::membership::Membership;
use crate::metrics::{separations, SeparationStats};
use crate::tensor::DenseTensor;

/// Redraw budget for degenerate draws.
pub const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLaw {
    #[default]
    Gaussian,
    /// `±σ` with equal probability: sub-Gaussian with norm exactly `σ`.
    Rademacher,
}

impl NoiseLaw {
    fn sample(self, sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseLaw::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            NoiseLaw::Rademacher => {
                if rng.gen::<bool>() {
                    sigma
                } else {
                    -sigma
                }
            }
        }
    }
}

/// Which block-centre distances the tensor SNR target is imposed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrScale {
    /// Rows of the rescaled core `S_i = mat_i(S ×_{j≠i} Λ_j)`.
    #[default]
    Rescaled,
    /// Rows of `mat_i(S)` itself, without the cluster-size weights.
    Core,
}

/// Design of the coupled block model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimDesign {
    pub dims: Vec<usize>,
    pub periods: usize,
    pub ranks: Vec<usize>,
    pub num_factors: usize,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_s: f64,
    pub sigma_b: f64,
    pub sigma_f: f64,
    pub mu_b: Vec<f64>,
    pub mu_f: Vec<f64>,
    pub c_x: f64,
    pub c_y: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub snr_x_scale: SnrScale,
    /// Cluster probabilities per mode; an empty list means uniform.
    pub balance: Vec<Vec<f64>>,
    pub noise: NoiseLaw,
    pub seed: u64,
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            dims: vec![200, 200],
            periods: 120,
            ranks: vec![5, 5],
            num_factors: 5,
            sigma_x: 1.0,
            sigma_y: 1.0,
            sigma_s: 1.0,
            sigma_b: 1.0,
            sigma_f: 1.0,
            mu_b: vec![1.0, 1.0, 1.0, 0.0, 0.0],
            mu_f: vec![0.03; 5],
            c_x: 1.0,
            c_y: 1.0,
            gamma_x: -0.5,
            gamma_y: -0.1,
            snr_x_scale: SnrScale::Rescaled,
            balance: Vec::new(),
            noise: NoiseLaw::Gaussian,
            seed: 0,
        }
    }
}

impl SimDesign {
    /// Same design with square dimensions `p` and `T` periods.
    pub fn with_size(mut self, p: usize, periods: usize) -> Self {
        self.dims = vec![p; self.dims.len()];
        self.periods = periods;
        self
    }

    /// Target `Δ_x²/σ_x² = C_x (T + p̄) p_*^{γ_x}`.
    pub fn snr_x(&self) -> f64 {
        let (pbar, pstar) = self.dim_summaries();
        self.c_x * (self.periods as f64 + pbar) * pstar.powf(self.gamma_x)
    }

    /// Target `Δ_y²/σ_y² = C_y (T + p̄) p_*^{γ_y} / r_2`.
    pub fn snr_y(&self) -> f64 {
        let (pbar, pstar) = self.dim_summaries();
        let r2 = self.ranks.get(1).copied().unwrap_or(1) as f64;
        self.c_y * (self.periods as f64 + pbar) * pstar.powf(self.gamma_y) / r2
    }

    fn dim_summaries(&self) -> (f64, f64) {
        let pbar = self.dims.iter().copied().max().unwrap_or(0) as f64;
        let pstar = self.dims.iter().map(|&p| p as f64).product();
        (pbar, pstar)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims.len();
        if d == 0 || self.ranks.len() != d {
            return Err(PmtcError::InfeasibleDesign(format!("{} dimensions and {} ranks", d, self.ranks.len())));
        }
        for (i, (&p, &r)) in self.dims.iter().zip(&self.ranks).enumerate() {
            if r == 0 || r > p {
                return Err(PmtcError::InfeasibleDesign(format!("mode {i}: {r} clusters for {p} entities")));
            }
        }
        if self.periods == 0 || self.num_factors == 0 {
            return Err(PmtcError::InfeasibleDesign("periods and factor count must be positive".into()));
        }
        if self.mu_b.len() != self.num_factors || self.mu_f.len() != self.num_factors {
            return Err(PmtcError::InvalidArgument(format!(
                "mean vectors have lengths {} and {}, expected {}",
                self.mu_b.len(),
                self.mu_f.len(),
                self.num_factors
            )));
        }
        let sigmas = [self.sigma_x, self.sigma_y, self.sigma_s, self.sigma_b, self.sigma_f];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || self.sigma_s == 0.0 {
            return Err(PmtcError::InvalidArgument("noise and draw scales must be finite, nonnegative, with σ_s > 0".into()));
        }
        let scalars = [self.c_x, self.c_y, self.gamma_x, self.gamma_y];
        if scalars.iter().any(|v| !v.is_finite()) || self.c_x <= 0.0 || self.c_y <= 0.0 {
            return Err(PmtcError::InvalidArgument("SNR constants must be positive and exponents finite".into()));
        }
        validate_balance(&self.balance, &self.ranks)
    }
}

fn validate_balance(balance: &[Vec<f64>], ranks: &[usize]) -> Result<()> {
    if balance.is_empty() {
        return Ok(());
    }
    if balance.len() != ranks.len() {
        return Err(PmtcError::InvalidArgument(format!("balance given for {} of {} modes", balance.len(), ranks.len())));
    }
    for (i, (w, &r)) in balance.iter().zip(ranks).enumerate() {
        if w.is_empty() {
            continue;
        }
        let sum: f64 = w.iter().sum();
        if w.len() != r || w.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(PmtcError::InvalidArgument(format!("mode {i}: balance weights {w:?} must be {r} probabilities summing to 1")));
        }
    }
    Ok(())
}

/// Memberships drawn i.i.d. from the balance weights; `None` if a cluster
/// came out empty.
fn draw_memberships(dims: &[usize], ranks: &[usize], balance: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Option<Vec<Membership>>> {
    let mut out = Vec::with_capacity(dims.len());
    for (i, (&p, &r)) in dims.iter().zip(ranks).enumerate() {
        let labels: Vec<usize> = match balance.get(i).filter(|w| !w.is_empty()) {
            Some(w) => {
                let dist = WeightedIndex::new(w).map_err(|e| PmtcError::InvalidArgument(e.to_string()))?;
                (0..p).map(|_| dist.sample(rng)).collect()
            }
            None => (0..p).map(|_| rng.gen_range(0..r)).collect(),
        };
        let m = Membership::new(labels, r)?;
        if m.first_empty_cluster().is_some() {
            return Ok(None);
        }
        out.push(m);
    }
    Ok(Some(out))
}

fn gaussian_matrix(rows: usize, cols: usize, mean: impl Fn(usize, usize) -> f64, sd: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    // column-major fill keeps the draw order independent of nalgebra internals
    let mut m = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            let z: f64 = StandardNormal.sample(rng);
            m[(r, c)] = mean(r, c) + sd * z;
        }
    }
    m
}

fn noise_tensor(dims: &[usize], law: NoiseLaw, sigma: f64, rng: &mut ChaCha8Rng) -> DenseTensor {
    let mut t = DenseTensor::zeros(dims);
    if sigma > 0.0 {
        t.data_mut().iter_mut().for_each(|v| *v = law.sample(sigma, rng));
    }
    t
}

fn expand(core: &DenseTensor, memberships: &[Membership]) -> Result<DenseTensor> {
    let hots: Vec<DMatrix<f64>> = memberships.iter().map(Membership::one_hot).collect();
    let factors: Vec<(usize, &DMatrix<f64>)> = hots.iter().enumerate().collect();
    core.multi_mode_product(&factors)
}

/// Smallest squared distance between distinct rows of `mat_mode(core)`;
/// infinite for a single row.
fn min_row_gap_sq(core: &DenseTensor, mode: usize) -> Result<f64> {
    let m = core.matricize(mode)?;
    let mut best = f64::INFINITY;
    for a in 0..m.nrows() {
        for b in a + 1..m.nrows() {
            best = best.min((m.row(a) - m.row(b)).norm_squared());
        }
    }
    Ok(best)
}

/// Generator for sub-draw `attempt` of a seed.
fn attempt_rng(seed: u64, attempt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(attempt);
    rng
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub memberships: Vec<Membership>,
    /// Block centres `r_1 x .. x r_d x T`.
    pub core: DenseTensor,
    /// Group loadings `r_1 x m_1`.
    pub loadings: DMatrix<f64>,
    /// Factor realizations `m_1 x T`.
    pub factors: DMatrix<f64>,
    /// Outcome centres `S_Y = B F`.
    pub outcome_centers: DMatrix<f64>,
    pub separations: SeparationStats,
    /// Redraws needed before a nondegenerate draw.
    pub attempts: u64,
}

/// One replication of the coupled block model.
///
/// After drawing, the core is rescaled so that `min_i Δ_{i,x}² / σ_x²` equals
/// [`SimDesign::snr_x`] (measured on the rows selected by
/// [`SimDesign::snr_x_scale`]) and the loadings so that `Δ_y² / σ_y²` equals
/// [`SimDesign::snr_y`]. A zero noise level is normalized against unit noise.
pub fn gen_pmtc(design: &SimDesign) -> Result<(CoupledData, GroundTruth)> {
    design.validate()?;
    let d = design.dims.len();
    let (t, m) = (design.periods, design.num_factors);
    let ref_x = if design.sigma_x > 0.0 { design.sigma_x } else { 1.0 };
    let ref_y = if design.sigma_y > 0.0 { design.sigma_y } else { 1.0 };

    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = attempt_rng(design.seed, attempt);
        let Some(memberships) = draw_memberships(&design.dims, &design.ranks, &design.balance, &mut rng)? else {
            continue;
        };
        let mut core_dims = design.ranks.clone();
        core_dims.push(t);
        let mut core = noise_tensor(&core_dims, NoiseLaw::Gaussian, design.sigma_s, &mut rng);
        let mut loadings = gaussian_matrix(design.ranks[0], m, |_, k| design.mu_b[k], design.sigma_b, &mut rng);
        let factors = gaussian_matrix(m, t, |k, _| design.mu_f[k], design.sigma_f, &mut rng);

        let raw = separations(&core, &memberships, Some(&(&loadings * &factors)))?;
        let raw_x = match design.snr_x_scale {
            SnrScale::Rescaled => raw.delta_x_min_sq(),
            SnrScale::Core => (0..d).map(|i| min_row_gap_sq(&core, i)).collect::<Result<Vec<_>>>()?.into_iter().fold(f64::INFINITY, f64::min),
        };
        if raw_x.is_finite() {
            if !(raw_x > 0.0) {
                continue;
            }
            core.scale((design.snr_x() * ref_x * ref_x / raw_x).sqrt());
        }
        if let Some(raw_y) = raw.delta_y_sq.filter(|v| v.is_finite()) {
            if !(raw_y > 0.0) {
                continue;
            }
            loadings *= (design.snr_y() * ref_y * ref_y / raw_y).sqrt();
        }
        let outcome_centers = &loadings * &factors;
        let stats = separations(&core, &memberships, Some(&outcome_centers))?;
        if stats.is_degenerate() {
            continue;
        }

        let signal = expand(&core, &memberships)?;
        let x = signal.add(&noise_tensor(signal.dims(), design.noise, design.sigma_x, &mut rng))?;
        let mut y = memberships[0].one_hot() * &outcome_centers;
        if design.sigma_y > 0.0 {
            y.iter_mut().for_each(|v| *v += design.noise.sample(design.sigma_y, &mut rng));
        }
        let data = CoupledData::new(x, Some(y))?;
        let truth = GroundTruth {
            memberships,
            core,
            loadings,
            factors,
            outcome_centers,
            separations: stats,
            attempts: attempt + 1,
        };
        debug_assert_eq!(truth.memberships.len(), d);
        return Ok((data, truth));
    }
    Err(PmtcError::InfeasibleDesign(format!("no nondegenerate draw in {MAX_ATTEMPTS} attempts")))
}

/// Design of the Gaussian tensor block model `X = S ×_i M_i + E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TensorBlockDesign {
    pub order: usize,
    pub dim: usize,
    pub clusters: usize,
    pub sigma: f64,
    /// Standard deviation of the core entries.
    pub signal: f64,
    /// Cluster probabilities shared by all modes; empty means uniform.
    pub balance: Vec<f64>,
    pub noise: NoiseLaw,
    pub seed: u64,
}

impl Default for TensorBlockDesign {
    fn default() -> Self {
        Self { order: 3, dim: 100, clusters: 2, sigma: 1.0, signal: 1.0, balance: Vec::new(), noise: NoiseLaw::Gaussian, seed: 0 }
    }
}

impl TensorBlockDesign {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.clusters == 0 || self.clusters > self.dim {
            return Err(PmtcError::InfeasibleDesign(format!(
                "order {} with {} clusters of {} entities",
                self.order, self.clusters, self.dim
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite() && self.signal > 0.0 && self.signal.is_finite()) {
            return Err(PmtcError::InvalidArgument("noise level must be nonnegative and signal positive".into()));
        }
        let ranks = vec![self.clusters; self.order];
        let balance = if self.balance.is_empty() { Vec::new() } else { vec![self.balance.clone(); self.order] };
        validate_balance(&balance, &ranks)
    }
}

/// One draw of the tensor block model, stored with a unit trailing mode so
/// that it is a tensor-only [`CoupledData`].
pub fn gen_tensor_block(design: &TensorBlockDesign) -> Result<(CoupledData, GroundTruth)> {
    design.validate()?;
    let dims = vec![design.dim; design.order];
    let ranks = vec![design.clusters; design.order];
    let balance = if design.balance.is_empty() { Vec::new() } else { vec![design.balance.clone(); design.order] };
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = attempt_rng(design.seed, attempt);
        let Some(memberships) = draw_memberships(&dims, &ranks, &balance, &mut rng)? else {
            continue;
        };
        let mut core_dims = ranks.clone();
        core_dims.push(1);
        let core = noise_tensor(&core_dims, NoiseLaw::Gaussian, design.signal, &mut rng);
        let stats = separations(&core, &memberships, None)?;
        if stats.is_degenerate() {
            continue;
        }
        let signal = expand(&core, &memberships)?;
        let x = signal.add(&noise_tensor(signal.dims(), design.noise, design.sigma, &mut rng))?;
        let truth = GroundTruth {
            memberships,
            core,
            loadings: DMatrix::zeros(design.clusters, 0),
            factors: DMatrix::zeros(0, 1),
            outcome_centers: DMatrix::zeros(design.clusters, 1),
            separations: stats,
            attempts: attempt + 1,
        };
        return Ok((CoupledData::new(x, None)?, truth));
    }
    Err(PmtcError::InfeasibleDesign(format!("no nondegenerate draw in {MAX_ATTEMPTS} attempts")))
}

/// Design of the coupled low-rank model `X = F ×_i U_i + E`, `Y = U_1 F_Y + η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubspaceDesign {
    pub dims: Vec<usize>,
    pub periods: usize,
    pub ranks: Vec<usize>,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// `log c_x`; the core is scaled to `λ_min = c_x √(p_1 + m_* T)`.
    pub log_cx: f64,
    /// `log c_y`; `F_Y` is scaled to `λ_min = c_y √(p_1 + T)`.
    pub log_cy: f64,
    pub seed: u64,
}

impl Default for SubspaceDesign {
    fn default() -> Self {
        Self { dims: vec![50, 50], periods: 40, ranks: vec![5, 5], sigma_x: 1.0, sigma_y: 1.0, log_cx: 1.0, log_cy: 2.0, seed: 0 }
    }
}

impl SubspaceDesign {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.ranks.len() != self.dims.len() || self.periods == 0 {
            return Err(PmtcError::InfeasibleDesign("dimensions, ranks and periods must be consistent".into()));
        }
        let mstar: usize = self.ranks.iter().product();
        for (i, (&p, &m)) in self.dims.iter().zip(&self.ranks).enumerate() {
            if m == 0 || m > p || m > (mstar / m) * self.periods || (i == 0 && m > self.periods) {
                return Err(PmtcError::InfeasibleDesign(format!("rank {m} is not attainable in mode {i}")));
            }
        }
        if ![self.sigma_x, self.sigma_y, self.log_cx, self.log_cy].iter().all(|v| v.is_finite()) || self.sigma_x < 0.0 || self.sigma_y < 0.0 {
            return Err(PmtcError::InvalidArgument("noise levels and log constants must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SubspaceTruth {
    pub bases: Vec<OrthonormalBasis>,
    pub core: DenseTensor,
    pub outcome_factors: DMatrix<f64>,
}

fn min_singular_value(a: &DMatrix<f64>) -> f64 {
    singular_values(a).into_iter().fold(f64::INFINITY, f64::min)
}

pub fn gen_subspace(design: &SubspaceDesign) -> Result<(CoupledData, SubspaceTruth)> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let d = design.dims.len();
    let t = design.periods;
    let bases: Vec<OrthonormalBasis> = design
        .dims
        .iter()
        .zip(&design.ranks)
        .map(|(&p, &m)| lsvd(&gaussian_matrix(p, m, |_, _| 0.0, 1.0, &mut rng), m))
        .collect::<Result<_>>()?;
    let mut core_dims = design.ranks.clone();
    core_dims.push(t);
    let mut core = noise_tensor(&core_dims, NoiseLaw::Gaussian, 1.0, &mut rng);
    let mut fy = gaussian_matrix(design.ranks[0], t, |_, _| 0.0, 1.0, &mut rng);

    let p1 = design.dims[0] as f64;
    let mstar: f64 = design.ranks.iter().map(|&m| m as f64).product();
    let mut lam = f64::INFINITY;
    for i in 0..d {
        lam = lam.min(min_singular_value(&core.matricize(i)?));
    }
    core.scale(design.log_cx.exp() * (p1 + mstar * t as f64).sqrt() / lam);
    fy *= design.log_cy.exp() * (p1 + t as f64).sqrt() / min_singular_value(&fy);

    let mats: Vec<&DMatrix<f64>> = bases.iter().map(|b| b.matrix()).collect();
    let factors: Vec<(usize, &DMatrix<f64>)> = mats.iter().enumerate().map(|(i, m)| (i, *m)).collect();
    let signal = core.multi_mode_product(&factors)?;
    let x = signal.add(&noise_tensor(signal.dims(), NoiseLaw::Gaussian, design.sigma_x, &mut rng))?;
    let mut y = bases[0].matrix() * &fy;
    if design.sigma_y > 0.0 {
        y.iter_mut().for_each(|v| *v += NoiseLaw::Gaussian.sample(design.sigma_y, &mut rng));
    }
    Ok((CoupledData::new(x, Some(y))?, SubspaceTruth { bases, core, outcome_factors: fy }))
}
