//! Spectral initialization: project each mode onto the estimated subspaces
//! and cluster the rows with relaxed k-means.

use nalgebra::DMatrix;

use crate::data::CoupledData;
use crate::error::{PmtcError, Result};
use crate::kmeans::{kmeans_relaxed, KmeansOptions};
use crate::linalg::OrthonormalBasis;
use crate::membership::Membership;
use crate::par::Exec;
use crate::pchooi::{coupled_unfolding, project_except};

#[derive(Debug, Clone)]
pub struct SpectralInit {
    pub memberships: Vec<Membership>,
    /// Projected matrices Ẑ_i, one per clustered mode (`p_i` rows each).
    pub projected: Vec<DMatrix<f64>>,
    pub kmeans_objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmtscOptions {
    /// Cluster counts per mode.
    pub clusters: Vec<usize>,
    /// Relaxation factor; `None` means `1 + ln r_i` per mode.
    pub kappa: Option<f64>,
    pub restarts: usize,
    pub seed: u64,
    pub omega: f64,
    pub use_outcome: bool,
    pub exec: Exec,
}

impl PmtscOptions {
    pub fn new(clusters: Vec<usize>, seed: u64) -> Self {
        Self {
            clusters,
            kappa: None,
            restarts: crate::kmeans::DEFAULT_RESTARTS,
            seed,
            omega: 1.0,
            use_outcome: true,
            exec: Exec::Sequential,
        }
    }
}

/// Per-mode k-means seed derived from the run seed.
fn mode_seed(seed: u64, mode: usize) -> u64 {
    seed ^ (mode as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn pmtsc(data: &CoupledData, bases: &[OrthonormalBasis], opts: &PmtscOptions) -> Result<SpectralInit> {
    let d = data.num_modes();
    if bases.len() != d || opts.clusters.len() != d {
        return Err(PmtcError::ShapeMismatch(format!(
            "{} bases and {} cluster counts for {d} modes",
            bases.len(),
            opts.clusters.len()
        )));
    }
    for (i, (b, &p)) in bases.iter().zip(data.dims()).enumerate() {
        if b.rows() != p {
            return Err(PmtcError::ShapeMismatch(format!("basis {i} has {} rows, mode has {p}", b.rows())));
        }
        if opts.clusters[i] == 0 || opts.clusters[i] > p {
            return Err(PmtcError::InvalidArgument(format!("cannot form {} clusters in mode {i}", opts.clusters[i])));
        }
    }
    let y = if opts.use_outcome { data.y.as_ref() } else { None };
    let mats: Vec<DMatrix<f64>> = bases.iter().map(|b| b.matrix().clone()).collect();

    let mut projected = Vec::with_capacity(d);
    for i in 0..d {
        let reduced = project_except(&data.x, &mats, i)?;
        let unfolded = if i == 0 { coupled_unfolding(&reduced, y, opts.omega) } else { reduced.matricize(i)? };
        let u = bases[i].matrix();
        projected.push(u * (u.transpose() * unfolded));
    }

    let results = opts.exec.map_range(d, |i| {
        let r = opts.clusters[i];
        let kopts = KmeansOptions {
            kappa: opts.kappa.unwrap_or_else(|| crate::kmeans::default_kappa(r)),
            restarts: opts.restarts,
            seed: mode_seed(opts.seed, i),
            exec: Exec::Sequential,
        };
        kmeans_relaxed(&projected[i], r, &kopts)
    });
    let mut memberships = Vec::with_capacity(d);
    let mut kmeans_objectives = Vec::with_capacity(d);
    for res in results {
        let res = res?;
        memberships.push(res.membership);
        kmeans_objectives.push(res.objective);
    }
    Ok(SpectralInit { memberships, projected, kmeans_objectives })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::cer;
    use crate::pchooi::{pchooi, PchooiOptions};
    use crate::tensor::DenseTensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn block_data(seed: u64) -> (CoupledData, Vec<Membership>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, r, t) = ([20, 15], [3, 2], 6);
        let truth: Vec<Membership> = (0..2)
            .map(|i| Membership::new((0..p[i]).map(|j| j % r[i]).collect(), r[i]).unwrap())
            .collect();
        let core = DenseTensor::from_fn(&[r[0], r[1], t], |_| rng.gen_range(-2.0..2.0));
        let x = core.mode_product(0, &truth[0].one_hot()).unwrap().mode_product(1, &truth[1].one_hot()).unwrap();
        let sy = DMatrix::from_fn(r[0], t, |_, _| rng.gen_range(-2.0..2.0));
        let y = truth[0].one_hot() * sy;
        (CoupledData::new(x, Some(y)).unwrap(), truth)
    }

    #[test]
    fn noiseless_blocks_are_recovered() {
        let (data, truth) = block_data(1);
        let hooi = pchooi(&data, &PchooiOptions::new(vec![3, 2])).unwrap();
        let init = pmtsc(&data, &hooi.bases, &PmtscOptions::new(vec![3, 2], 5)).unwrap();
        for (m, t) in init.memberships.iter().zip(&truth) {
            assert_eq!(cer(m, t).unwrap().0, 0.0);
        }
        assert_eq!(init.projected[0].nrows(), 20);
        assert_eq!(init.projected[1].nrows(), 15);
    }

    #[test]
    fn single_cluster_everywhere() {
        let (data, _) = block_data(2);
        let hooi = pchooi(&data, &PchooiOptions::new(vec![1, 1])).unwrap();
        let init = pmtsc(&data, &hooi.bases, &PmtscOptions::new(vec![1, 1], 0)).unwrap();
        assert!(init.memberships.iter().all(|m| m.labels().iter().all(|&g| g == 0)));
    }

    #[test]
    fn deterministic_across_exec() {
        let (data, _) = block_data(3);
        let hooi = pchooi(&data, &PchooiOptions::new(vec![3, 2])).unwrap();
        let mut opts = PmtscOptions::new(vec![3, 2], 9);
        let a = pmtsc(&data, &hooi.bases, &opts).unwrap();
        opts.exec = Exec::Parallel;
        let b = pmtsc(&data, &hooi.bases, &opts).unwrap();
        assert_eq!(a.memberships, b.memberships);
        assert_eq!(a.kmeans_objectives, b.kmeans_objectives);
    }

    #[test]
    fn rejects_mismatched_bases() {
        let (data, _) = block_data(4);
        let hooi = pchooi(&data, &PchooiOptions::new(vec![3, 2])).unwrap();
        assert!(pmtsc(&data, &hooi.bases[..1], &PmtscOptions::new(vec![3, 2], 0)).is_err());
        assert!(pmtsc(&data, &hooi.bases, &PmtscOptions::new(vec![3, 16], 0)).is_err());
    }
}
