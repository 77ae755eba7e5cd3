//! Relaxed k-means (k-means++ seeding, Lloyd sweeps, best of several
//! restarts) and exact nearest-centroid assignment.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PmtcError, Result};
use crate::membership::Membership;
use crate::par::Exec;

pub const MAX_LLOYD_SWEEPS: usize = 100;
pub const DEFAULT_RESTARTS: usize = 10;

/// Default relaxation factor `1 + ln r` (a single cluster uses `1 + ln 2`).
pub fn default_kappa(r: usize) -> f64 {
    1.0 + (r.max(2) as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansOptions {
    pub kappa: f64,
    pub restarts: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl KmeansOptions {
    pub fn new(r: usize, seed: u64) -> Self {
        Self { kappa: default_kappa(r), restarts: DEFAULT_RESTARTS, seed, exec: Exec::Sequential }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub membership: Membership,
    /// `r x q` centroid matrix.
    pub centroids: DMatrix<f64>,
    /// Sum of squared row-to-centroid distances.
    pub objective: f64,
}

/// Row-major copy of a matrix.
struct Rows {
    data: Vec<f64>,
    dim: usize,
}

impl Rows {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self { data: m.transpose().as_slice().to_vec(), dim: m.ncols() }
    }

    fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &Rows) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for a in 0..centroids.len() {
        let d = sq_dist(point, centroids.row(a));
        if d < best.1 {
            best = (a, d);
        }
    }
    best
}

fn check_finite(z: &DMatrix<f64>) -> Result<()> {
    if z.iter().any(|x| !x.is_finite()) {
        return Err(PmtcError::NonFinite("clustering input"));
    }
    Ok(())
}

/// Nearest-centroid labels for every row of `z`, plus the squared distance to
/// the chosen centroid. Ties go to the lowest cluster index.
pub fn nns_with_distances(z: &DMatrix<f64>, centroids: &DMatrix<f64>, exec: Exec) -> Result<(Membership, Vec<f64>)> {
    if centroids.nrows() == 0 {
        return Err(PmtcError::InvalidArgument("need at least one centroid".into()));
    }
    if z.ncols() != centroids.ncols() {
        return Err(PmtcError::ShapeMismatch(format!(
            "points have {} columns, centroids {}",
            z.ncols(),
            centroids.ncols()
        )));
    }
    let points = Rows::from_matrix(z);
    let cents = Rows::from_matrix(centroids);
    let (labels, dists): (Vec<usize>, Vec<f64>) =
        exec.map_range(z.nrows(), |j| nearest(points.row(j), &cents)).into_iter().unzip();
    Ok((Membership::new(labels, centroids.nrows())?, dists))
}

/// Nearest-centroid assignment.
pub fn nns(z: &DMatrix<f64>, centroids: &DMatrix<f64>) -> Result<Membership> {
    nns_with_distances(z, centroids, Exec::Sequential).map(|(m, _)| m)
}

/// Sum of squared distances from each row to its cluster's centroid.
pub fn kmeans_objective(z: &DMatrix<f64>, membership: &Membership, centroids: &DMatrix<f64>) -> f64 {
    let points = Rows::from_matrix(z);
    let cents = Rows::from_matrix(centroids);
    (0..points.len()).map(|j| sq_dist(points.row(j), cents.row(membership.label(j)))).sum()
}

/// Runs `restarts` rounds of k-means++ followed by Lloyd iterations and
/// returns the lowest-objective round (earliest round on ties).
pub fn kmeans_relaxed(z: &DMatrix<f64>, r: usize, opts: &KmeansOptions) -> Result<KmeansResult> {
    let p = z.nrows();
    if r == 0 || r > p {
        return Err(PmtcError::InvalidArgument(format!("cannot form {r} clusters from {p} points")));
    }
    if !(opts.kappa > 1.0) {
        return Err(PmtcError::InvalidArgument(format!("relaxation factor must exceed 1, got {}", opts.kappa)));
    }
    check_finite(z)?;
    let points = Rows::from_matrix(z);
    let restarts = opts.restarts.max(1);
    let runs = opts.exec.map_range(restarts, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(s as u64);
        single_run(&points, r, &mut rng)
    });
    let (labels, cents, objective) = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.2.total_cmp(&b.2).then(i.cmp(j)))
        .map(|(_, run)| run)
        .expect("at least one restart");
    let centroids = DMatrix::from_row_slice(r, points.dim, &cents.data);
    Ok(KmeansResult { membership: Membership::new(labels, r)?, centroids, objective })
}

fn seed_plus_plus(points: &Rows, r: usize, rng: &mut ChaCha8Rng) -> Rows {
    let p = points.len();
    let mut chosen = Vec::with_capacity(r);
    chosen.push(rng.gen_range(0..p));
    let mut d2: Vec<f64> = (0..p).map(|j| sq_dist(points.row(j), points.row(chosen[0]))).collect();
    while chosen.len() < r {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = p - 1;
            for (j, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        pick = j;
                        break;
                    }
                    target -= d;
                }
            }
            // guard against rounding landing on an already chosen point
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            (0..p).find(|j| !chosen.contains(j)).unwrap_or(0)
        };
        chosen.push(next);
        for (j, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(j), points.row(next)));
        }
    }
    let mut data = Vec::with_capacity(r * points.dim);
    for &c in &chosen {
        data.extend_from_slice(points.row(c));
    }
    Rows { data, dim: points.dim }
}

fn update_centroids(points: &Rows, labels: &[usize], r: usize) -> (Rows, Vec<usize>) {
    let dim = points.dim;
    let mut data = vec![0.0; r * dim];
    let mut counts = vec![0usize; r];
    for (j, &g) in labels.iter().enumerate() {
        counts[g] += 1;
        for (c, v) in data[g * dim..(g + 1) * dim].iter_mut().zip(points.row(j)) {
            *c += v;
        }
    }
    for (a, &n) in counts.iter().enumerate() {
        if n > 0 {
            data[a * dim..(a + 1) * dim].iter_mut().for_each(|c| *c /= n as f64);
        }
    }
    (Rows { data, dim }, counts)
}

fn single_run(points: &Rows, r: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Rows, f64) {
    let p = points.len();
    let mut cents = seed_plus_plus(points, r, rng);
    let mut labels: Vec<usize> = (0..p).map(|j| nearest(points.row(j), &cents).0).collect();
    for _ in 0..MAX_LLOYD_SWEEPS {
        let (mut next, mut counts) = update_centroids(points, &labels, r);
        // move the point farthest from its centroid into each empty cluster
        while let Some(empty) = counts.iter().position(|&n| n == 0) {
            let far = (0..p)
                .filter(|&j| counts[labels[j]] > 1)
                .map(|j| (j, sq_dist(points.row(j), next.row(labels[j]))))
                .fold(None, |best: Option<(usize, f64)>, (j, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((j, d)),
                })
                .map(|(j, _)| j)
                .expect("r <= p leaves a donor cluster");
            labels[far] = empty;
            (next, counts) = update_centroids(points, &labels, r);
        }
        cents = next;
        let relabeled: Vec<usize> = (0..p).map(|j| nearest(points.row(j), &cents).0).collect();
        if relabeled == labels {
            break;
        }
        labels = relabeled;
    }
    finish_run(points, labels, r)
}

fn finish_run(points: &Rows, mut labels: Vec<usize>, r: usize) -> (Vec<usize>, Rows, f64) {
    let p = points.len();
    let (mut cents, mut counts) = update_centroids(points, &labels, r);
    while let Some(empty) = counts.iter().position(|&n| n == 0) {
        let far = (0..p)
            .filter(|&j| counts[labels[j]] > 1)
            .max_by(|&a, &b| {
                sq_dist(points.row(a), cents.row(labels[a]))
                    .total_cmp(&sq_dist(points.row(b), cents.row(labels[b])))
                    .then(b.cmp(&a))
            })
            .expect("r <= p leaves a donor cluster");
        labels[far] = empty;
        (cents, counts) = update_centroids(points, &labels, r);
    }
    let objective = (0..p).map(|j| sq_dist(points.row(j), cents.row(labels[j]))).sum();
    (labels, cents, objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn repeated_points_give_zero_objective() {
        let centers = [[0.0, 0.0], [5.0, 1.0], [-3.0, 4.0]];
        let z = DMatrix::from_fn(12, 2, |j, k| centers[j % 3][k]);
        let res = kmeans_relaxed(&z, 3, &KmeansOptions::new(3, 1)).unwrap();
        assert_eq!(res.objective, 0.0);
        for j in 0..12 {
            assert_eq!(res.membership.label(j), res.membership.label(j % 3));
        }
        assert_eq!(res.membership.cluster_sizes(), &[4, 4, 4]);
    }

    #[test]
    fn line_points_split_in_two() {
        let z = DMatrix::from_column_slice(6, 1, &[0.0, 0.1, 0.2, 10.0, 10.1, 10.2]);
        let res = kmeans_relaxed(&z, 2, &KmeansOptions::new(2, 7)).unwrap();
        let g = res.membership.labels();
        assert!(g[0] == g[1] && g[1] == g[2] && g[3] == g[4] && g[4] == g[5] && g[0] != g[3]);
        // brute force over the 31 two-block partitions
        let xs = z.as_slice();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << 5) {
            let mut sse = 0.0;
            for side in [true, false] {
                let pts: Vec<f64> = (0..6).filter(|&j| ((mask >> j) & 1 == 1) == side).map(|j| xs[j]).collect();
                if !pts.is_empty() {
                    let mean = pts.iter().sum::<f64>() / pts.len() as f64;
                    sse += pts.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
                }
            }
            best = best.min(sse);
        }
        assert!((best - 0.04).abs() < 1e-12);
        assert!((res.objective - best).abs() < 1e-12);
    }

    #[test]
    fn objective_is_recomputable() {
        let z = gaussian(40, 3, 2);
        let res = kmeans_relaxed(&z, 4, &KmeansOptions::new(4, 3)).unwrap();
        let again = kmeans_objective(&z, &res.membership, &res.centroids);
        assert!((again - res.objective).abs() <= 1e-10);
    }

    #[test]
    fn deterministic_given_seed_and_exec() {
        let z = gaussian(50, 4, 4);
        let mut opts = KmeansOptions::new(5, 11);
        let a = kmeans_relaxed(&z, 5, &opts).unwrap();
        opts.exec = Exec::Parallel;
        let b = kmeans_relaxed(&z, 5, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invariant_under_orthogonal_column_transform() {
        let z = gaussian(30, 3, 5);
        let q = crate::linalg::lsvd(&gaussian(3, 3, 6), 3).unwrap().into_matrix();
        let opts = KmeansOptions::new(3, 9);
        let a = kmeans_relaxed(&z, 3, &opts).unwrap();
        let b = kmeans_relaxed(&(&z * q), 3, &opts).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-9);
        assert_eq!(crate::metrics::cer(&a.membership, &b.membership).unwrap().0, 0.0);
    }

    #[test]
    fn kmeans_errors() {
        let z = gaussian(3, 2, 1);
        assert!(kmeans_relaxed(&z, 4, &KmeansOptions::new(4, 0)).is_err());
        let mut opts = KmeansOptions::new(2, 0);
        opts.kappa = 1.0;
        assert!(kmeans_relaxed(&z, 2, &opts).is_err());
        let mut bad = z.clone();
        bad[(0, 0)] = f64::INFINITY;
        assert!(matches!(kmeans_relaxed(&bad, 2, &KmeansOptions::new(2, 0)), Err(PmtcError::NonFinite(_))));
    }

    #[test]
    fn fewer_distinct_points_than_clusters_still_fills_clusters() {
        let z = DMatrix::from_column_slice(5, 1, &[1.0, 1.0, 1.0, 1.0, 2.0]);
        let res = kmeans_relaxed(&z, 3, &KmeansOptions::new(3, 0)).unwrap();
        assert!(res.membership.first_empty_cluster().is_none());
    }

    #[test]
    fn nns_examples() {
        let c = gaussian(4, 3, 7);
        assert_eq!(nns(&c, &c).unwrap().labels(), &[0, 1, 2, 3]);
        let c = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let z = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert_eq!(nns(&z, &c).unwrap().labels(), &[0]);
        assert!(nns(&DMatrix::zeros(2, 2), &c).is_err());
    }

    #[test]
    fn nns_matches_exhaustive_scan() {
        let z = gaussian(60, 5, 8);
        let c = gaussian(6, 5, 9);
        let (m, d) = nns_with_distances(&z, &c, Exec::Parallel).unwrap();
        for j in 0..60 {
            let dists: Vec<f64> = (0..6).map(|a| (z.row(j) - c.row(a)).norm_squared()).collect();
            let oracle = (0..6).fold(0, |b, a| if dists[a] < dists[b] { a } else { b });
            assert_eq!(m.label(j), oracle);
            assert!((d[j] - dists[oracle]).abs() < 1e-12);
            assert!(dists.iter().all(|&x| d[j] <= x + 1e-12));
        }
    }
}
