//! End-to-end estimation: coupled subspaces, spectral initialization, Lloyd
//! refinement and block-centre estimates, plus the single-source baselines.

use nalgebra::DMatrix;

use crate::data::CoupledData;
use crate::error::{PmtcError, Result};
use crate::kmeans::{kmeans_relaxed, KmeansOptions, DEFAULT_RESTARTS};
use crate::linalg::lsvd;
use crate::lloyd::{default_max_iter, pmtlloyd, LloydOptions, LloydTrace, Projection, Schedule};
use crate::membership::Membership;
use crate::par::Exec;
use crate::pchooi::{pchooi, PchooiOptions, PchooiResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::pmtsc::{pmtsc, PmtscOptions, SpectralInit};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Cluster counts per clustered mode.
    pub clusters: Vec<usize>,
    /// Tucker ranks for the subspace step; defaults to the cluster counts.
    pub ranks: Option<Vec<usize>>,
    pub omega: f64,
    /// Use the outcome panel (coupled fit) or the tensor alone.
    pub use_outcome: bool,
    /// Refinement after the spectral step; `None` stops at initialization.
    pub refine: Option<Projection>,
    /// Lloyd iterations; defaults to `2⌈ln p̄⌉`.
    pub lloyd_iter: Option<usize>,
    pub schedule: Schedule,
    pub pchooi_max_iter: usize,
    pub pchooi_tol: f64,
    pub kmeans_restarts: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl FitOptions {
    pub fn new(clusters: Vec<usize>, seed: u64) -> Self {
        Self {
            clusters,
            ranks: None,
            omega: 1.0,
            use_outcome: true,
            refine: Some(Projection::Orthogonal),
            lloyd_iter: None,
            schedule: Schedule::Simultaneous,
            pchooi_max_iter: DEFAULT_MAX_ITER,
            pchooi_tol: DEFAULT_TOL,
            kmeans_restarts: DEFAULT_RESTARTS,
            seed,
            exec: Exec::Sequential,
        }
    }

    fn pchooi_options(&self) -> PchooiOptions {
        PchooiOptions {
            ranks: self.ranks.clone().unwrap_or_else(|| self.clusters.clone()),
            max_iter: self.pchooi_max_iter,
            tol: self.pchooi_tol,
            omega: self.omega,
            use_outcome: self.use_outcome,
        }
    }

    fn pmtsc_options(&self) -> PmtscOptions {
        PmtscOptions {
            clusters: self.clusters.clone(),
            kappa: None,
            restarts: self.kmeans_restarts,
            seed: self.seed,
            omega: self.omega,
            use_outcome: self.use_outcome,
            exec: self.exec,
        }
    }

    fn lloyd_options(&self, projection: Projection, dims: &[usize]) -> LloydOptions {
        LloydOptions {
            max_iter: self.lloyd_iter.unwrap_or_else(|| default_max_iter(dims)),
            projection,
            schedule: self.schedule,
            omega: self.omega,
            use_outcome: self.use_outcome,
            exec: self.exec,
        }
    }
}

/// Output of the spectral stage, reusable by several refinements.
#[derive(Debug, Clone)]
pub struct Initialization {
    pub subspaces: PchooiResult,
    pub spectral: SpectralInit,
}

#[derive(Debug, Clone)]
pub struct PmtcEstimate {
    pub memberships: Vec<Membership>,
    /// Memberships from the spectral stage.
    pub initial: Vec<Membership>,
    /// Block means `X ×_i P̂_iᵀ` (`r_1 x .. x r_d x T`).
    pub core: DenseTensor,
    /// Outcome centres `P̂_1ᵀY`, when the outcome panel was used.
    pub outcome_centers: Option<DMatrix<f64>>,
    pub trace: Option<LloydTrace>,
}

pub fn initialize(data: &CoupledData, opts: &FitOptions) -> Result<Initialization> {
    if opts.use_outcome && data.y.is_none() {
        return Err(PmtcError::InvalidArgument("coupled fit requested but the data has no outcome panel".into()));
    }
    let subspaces = pchooi(data, &opts.pchooi_options())?;
    let spectral = pmtsc(data, &subspaces.bases, &opts.pmtsc_options())?;
    Ok(Initialization { subspaces, spectral })
}

/// Refines a spectral initialization (or keeps it when `refine` is `None`)
/// and estimates block centres.
pub fn refine(data: &CoupledData, init: &Initialization, opts: &FitOptions) -> Result<PmtcEstimate> {
    let initial = init.spectral.memberships.clone();
    let (memberships, trace) = match opts.refine {
        Some(projection) => {
            let (m, t) = pmtlloyd(data, &initial, &opts.lloyd_options(projection, data.dims()))?;
            (m, Some(t))
        }
        None => (initial.clone(), None),
    };
    let (core, outcome_centers) = block_means(data, &memberships, opts.use_outcome)?;
    Ok(PmtcEstimate { memberships, initial, core, outcome_centers, trace })
}

pub fn fit_pmtc(data: &CoupledData, opts: &FitOptions) -> Result<PmtcEstimate> {
    let init = initialize(data, opts)?;
    refine(data, &init, opts)
}

/// Block averages of the tensor and of the outcome panel under `memberships`.
pub fn block_means(data: &CoupledData, memberships: &[Membership], use_outcome: bool) -> Result<(DenseTensor, Option<DMatrix<f64>>)> {
    let reducers: Vec<DMatrix<f64>> = memberships.iter().map(|m| m.projector().map(|p| p.transpose())).collect::<Result<_>>()?;
    let factors: Vec<(usize, &DMatrix<f64>)> = reducers.iter().enumerate().collect();
    let core = data.x.multi_mode_product(&factors)?;
    let outcome = match (use_outcome, data.y.as_ref()) {
        (true, Some(y)) => Some(&reducers[0] * y),
        _ => None,
    };
    Ok((core, outcome))
}

/// Spectral clustering of the outcome panel alone: project onto its top
/// `rank` left singular vectors and run relaxed k-means.
pub fn spectral_outcome(y: &DMatrix<f64>, clusters: usize, rank: usize, restarts: usize, seed: u64) -> Result<Membership> {
    let u = lsvd(y, rank)?;
    let z = u.matrix() * (u.matrix().transpose() * y);
    let opts = KmeansOptions { restarts, ..KmeansOptions::new(clusters, seed) };
    Ok(kmeans_relaxed(&z, clusters, &opts)?.membership)
}
