//! Projected Lloyd refinement of the memberships.
//!
//! For mode `i`, every other clustered mode `j` is compressed with the
//! current membership, either through the orthonormal basis `W_j = M_j Λ_j⁻¹`
//! ([`Projection::Orthogonal`]) or through the averaging matrix
//! `P_j = M_j (M_jᵀM_j)⁻¹` ([`Projection::Oblique`], the high-order Lloyd
//! baseline). Rows of the compressed unfolding (with `Y` appended on mode 0)
//! are then reassigned to the nearest of the cluster means `P_iᵀ Z_i`.

use nalgebra::DMatrix;

use crate::data::{hcat, CoupledData};
use crate::error::{PmtcError, Result};
use crate::kmeans::nns_with_distances;
use crate::membership::Membership;
use crate::metrics::{cer, cer_fixed};
use crate::par::Exec;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Projection {
    #[default]
    Orthogonal,
    Oblique,
}

/// Which memberships the other modes are compressed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Every mode uses the previous iteration's memberships.
    #[default]
    Simultaneous,
    /// Modes before `i` use the memberships already updated this iteration.
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydOptions {
    pub max_iter: usize,
    pub projection: Projection,
    pub schedule: Schedule,
    pub omega: f64,
    pub use_outcome: bool,
    pub exec: Exec,
}

impl LloydOptions {
    pub fn new(max_iter: usize) -> Self {
        Self {
            max_iter,
            projection: Projection::Orthogonal,
            schedule: Schedule::Simultaneous,
            omega: 1.0,
            use_outcome: true,
            exec: Exec::Sequential,
        }
    }

    pub fn oblique(max_iter: usize) -> Self {
        Self { projection: Projection::Oblique, ..Self::new(max_iter) }
    }
}

/// `2⌈ln p̄⌉`, enough iterations for exact recovery in the well-separated regime.
pub fn default_max_iter(dims: &[usize]) -> usize {
    let p = dims.iter().copied().max().unwrap_or(1).max(2) as f64;
    2 * p.ln().ceil() as usize
}

#[derive(Debug, Clone)]
pub struct LloydIteration {
    pub memberships: Vec<Membership>,
    /// Cluster means `Ĉ_i` used for the assignment of each mode.
    pub centroids: Vec<DMatrix<f64>>,
    /// Weighted squared loss at the new memberships with plug-in centres.
    pub loss: f64,
    /// Number of labels that changed, summed over modes.
    pub changed: usize,
}

#[derive(Debug, Clone)]
pub struct LloydTrace {
    /// Starting memberships (after empty-cluster repair).
    pub initial: Vec<Membership>,
    pub initial_loss: f64,
    pub iterations: Vec<LloydIteration>,
    pub converged: bool,
}

impl LloydTrace {
    pub fn iterations_used(&self) -> usize {
        self.iterations.len()
    }
}

fn reducer(m: &Membership, projection: Projection) -> Result<DMatrix<f64>> {
    Ok(match projection {
        Projection::Orthogonal => m.normalized_basis()?.into_matrix().transpose(),
        Projection::Oblique => m.projector()?.transpose(),
    })
}

fn compress_except(x: &DenseTensor, memberships: &[Membership], skip: usize, projection: Projection) -> Result<DenseTensor> {
    let reducers: Vec<(usize, DMatrix<f64>)> = memberships
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .map(|(j, m)| reducer(m, projection).map(|r| (j, r)))
        .collect::<Result<_>>()?;
    let factors: Vec<(usize, &DMatrix<f64>)> = reducers.iter().map(|(j, r)| (*j, r)).collect();
    x.multi_mode_product(&factors)
}

/// The assignment problem of one mode: rows to cluster (`Z_i`) and the
/// cluster means they are compared with (`C_i = P_iᵀ Z_i`).
///
/// On mode 0 with an outcome panel, `Z_0 = [√ω·mat_0(X̃), Y]`, so the squared
/// row distance is ω times the tensor-block distance plus the outcome
/// distance.
pub fn assignment_problem(
    data: &CoupledData,
    memberships: &[Membership],
    mode: usize,
    projection: Projection,
    omega: f64,
    use_outcome: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let compressed = compress_except(&data.x, memberships, mode, projection)?;
    let mut z = compressed.matricize(mode)?;
    if mode == 0 {
        if let (Some(y), true) = (data.y.as_ref(), use_outcome) {
            if omega != 1.0 {
                z *= omega.sqrt();
            }
            z = hcat(&z, y);
        }
    }
    let c = memberships[mode].projector()?.transpose() * &z;
    Ok((z, c))
}

/// Weighted plug-in loss `ω‖X − Ŝ ×_i M_i‖² + ‖Y − M_0 Ŝ_Y‖²` with
/// block-mean centres; equal to the energy outside the block-constant
/// subspace.
pub fn plug_in_loss(data: &CoupledData, memberships: &[Membership], omega: f64, use_outcome: bool) -> Result<f64> {
    let compressed = compress_except(&data.x, memberships, usize::MAX, Projection::Orthogonal)?;
    let total_x: f64 = data.x.data().iter().map(|v| v * v).sum();
    let kept_x: f64 = compressed.data().iter().map(|v| v * v).sum();
    let mut loss = omega * (total_x - kept_x).max(0.0);
    if let (Some(y), true) = (data.y.as_ref(), use_outcome) {
        let w = memberships[0].normalized_basis()?;
        let kept_y = (w.matrix().transpose() * y).norm_squared();
        loss += (y.norm_squared() - kept_y).max(0.0);
    }
    Ok(loss)
}

/// Moves the worst-fitting point into each empty cluster.
fn repair_empty(m: Membership, dists: &mut [f64]) -> Result<Membership> {
    let r = m.num_clusters();
    let mut labels = m.labels().to_vec();
    let mut sizes = m.cluster_sizes().to_vec();
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let donor = (0..labels.len())
            .filter(|&j| sizes[labels[j]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .ok_or_else(|| PmtcError::InvalidArgument("more clusters than points".into()))?;
        sizes[labels[donor]] -= 1;
        sizes[empty] += 1;
        labels[donor] = empty;
        dists[donor] = f64::NEG_INFINITY;
    }
    Membership::new(labels, r)
}

fn validate(data: &CoupledData, init: &[Membership], opts: &LloydOptions) -> Result<()> {
    if opts.max_iter < 1 {
        return Err(PmtcError::InvalidArgument("Lloyd refinement needs at least one iteration".into()));
    }
    if init.len() != data.num_modes() {
        return Err(PmtcError::ShapeMismatch(format!("{} memberships for {} modes", init.len(), data.num_modes())));
    }
    for (i, (m, &p)) in init.iter().zip(data.dims()).enumerate() {
        if m.len() != p {
            return Err(PmtcError::ShapeMismatch(format!("membership {i} has {} entries, mode has {p}", m.len())));
        }
    }
    Ok(())
}

pub fn pmtlloyd(data: &CoupledData, init: &[Membership], opts: &LloydOptions) -> Result<(Vec<Membership>, LloydTrace)> {
    validate(data, init, opts)?;
    let d = data.num_modes();
    let mut current: Vec<Membership> = Vec::with_capacity(d);
    for m in init {
        // initial empty clusters get the farthest-from-centre points of mode i's
        // largest clusters; distances are not available yet, so use entity order
        let mut zeros = vec![0.0; m.len()];
        current.push(repair_empty(m.clone(), &mut zeros)?);
    }
    let init_repaired = current.clone();
    let initial_loss = plug_in_loss(data, &current, opts.omega, opts.use_outcome)?;
    let mut iterations = Vec::new();
    let mut converged = false;

    for _ in 0..opts.max_iter {
        let previous = current.clone();
        let mut next = previous.clone();
        let mut centroids = Vec::with_capacity(d);
        let mut changed = 0;
        for i in 0..d {
            let basis = match opts.schedule {
                Schedule::Simultaneous => &previous,
                Schedule::Sequential => &next,
            };
            let (z, c) = assignment_problem(data, basis, i, opts.projection, opts.omega, opts.use_outcome)?;
            let (assigned, mut dists) = nns_with_distances(&z, &c, opts.exec)?;
            let assigned = repair_empty(assigned, &mut dists)?;
            changed += assigned.labels().iter().zip(previous[i].labels()).filter(|(a, b)| a != b).count();
            next[i] = assigned;
            centroids.push(c);
        }
        current = next;
        let loss = plug_in_loss(data, &current, opts.omega, opts.use_outcome)?;
        iterations.push(LloydIteration { memberships: current.clone(), centroids, loss, changed });
        if changed == 0 {
            converged = true;
            break;
        }
    }
    let initial = init_repaired;
    Ok((current, LloydTrace { initial, initial_loss, iterations, converged }))
}

impl LloydTrace {
    /// Writes one row per (iteration, mode), iteration 0 being the
    /// initialization. With `truth`, error rates are taken under the label
    /// matching of the initialization, which stays fixed across iterations.
    pub fn write_csv<W: std::io::Write>(&self, truth: Option<&[Membership]>, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "mode", "cer_vs_truth", "loss"])?;
        let perms = match truth {
            Some(t) => {
                if t.len() != self.initial.len() {
                    return Err(PmtcError::ShapeMismatch(format!("{} true memberships for {} modes", t.len(), self.initial.len())));
                }
                Some(self.initial.iter().zip(t).map(|(m, t)| cer(m, t).map(|(_, p)| p)).collect::<Result<Vec<_>>>()?)
            }
            None => None,
        };
        let rounds = std::iter::once((&self.initial, self.initial_loss))
            .chain(self.iterations.iter().map(|it| (&it.memberships, it.loss)));
        for (k, (ms, loss)) in rounds.enumerate() {
            for (i, m) in ms.iter().enumerate() {
                let rate = match (truth, &perms) {
                    (Some(t), Some(p)) => cer_fixed(m, &t[i], &p[i])?.to_string(),
                    _ => String::new(),
                };
                w.write_record([k.to_string(), (i + 1).to_string(), rate, loss.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
