//! Clustering and estimation metrics: permutation-aligned error rates,
//! misclustering loss, separation statistics and total R².

use nalgebra::{DMatrix, DVector};

use crate::error::{PmtcError, Result};
use crate::membership::{is_permutation, Membership};
use crate::tensor::DenseTensor;

/// Largest cluster count for which label matching enumerates permutations.
pub const EXHAUSTIVE_MATCHING_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Matching {
    /// Exhaustive up to [`EXHAUSTIVE_MATCHING_MAX`] clusters, Hungarian above.
    Auto,
    Exhaustive,
    Hungarian,
}

/// `confusion[a][b]` = number of entities with estimated label `a` and true label `b`.
pub fn confusion(est: &Membership, truth: &Membership) -> Result<Vec<Vec<usize>>> {
    if est.len() != truth.len() {
        return Err(PmtcError::ShapeMismatch(format!("{} vs {} labels", est.len(), truth.len())));
    }
    if est.num_clusters() != truth.num_clusters() {
        return Err(PmtcError::ShapeMismatch(format!(
            "{} vs {} clusters",
            est.num_clusters(),
            truth.num_clusters()
        )));
    }
    let r = est.num_clusters();
    let mut c = vec![vec![0usize; r]; r];
    for (&a, &b) in est.labels().iter().zip(truth.labels()) {
        c[a][b] += 1;
    }
    Ok(c)
}

/// Misclustering error rate: the smallest fraction of mismatches over all
/// relabelings of the truth. Returns the rate and the optimal permutation
/// `perm`, which maps each true label `b` to the estimated label `perm[b]`.
pub fn cer(est: &Membership, truth: &Membership) -> Result<(f64, Vec<usize>)> {
    cer_with(est, truth, Matching::Auto)
}

pub fn cer_with(est: &Membership, truth: &Membership, matching: Matching) -> Result<(f64, Vec<usize>)> {
    let c = confusion(est, truth)?;
    let r = c.len();
    let exhaustive = match matching {
        Matching::Auto => r <= EXHAUSTIVE_MATCHING_MAX,
        Matching::Exhaustive => true,
        Matching::Hungarian => false,
    };
    let perm = if exhaustive { best_permutation_exhaustive(&c) } else { best_permutation_hungarian(&c) };
    let matched: usize = (0..r).map(|b| c[perm[b]][b]).sum();
    let p = est.len().max(1);
    Ok(((est.len() - matched) as f64 / p as f64, perm))
}

/// Mismatch fraction under a fixed true-to-estimated relabeling.
pub fn cer_fixed(est: &Membership, truth: &Membership, perm: &[usize]) -> Result<f64> {
    confusion(est, truth)?;
    if !is_permutation(perm, truth.num_clusters()) {
        return Err(PmtcError::InvalidArgument(format!("{perm:?} is not a permutation")));
    }
    let wrong = est.labels().iter().zip(truth.labels()).filter(|(&a, &b)| a != perm[b]).count();
    Ok(wrong as f64 / est.len().max(1) as f64)
}

fn best_permutation_exhaustive(c: &[Vec<usize>]) -> Vec<usize> {
    let r = c.len();
    let mut perm: Vec<usize> = (0..r).collect();
    let mut best = perm.clone();
    let mut best_score = score(c, &perm);
    // lexicographic enumeration keeps the first optimum deterministic
    while next_permutation(&mut perm) {
        let s = score(c, &perm);
        if s > best_score {
            best_score = s;
            best.clone_from(&perm);
        }
    }
    best
}

fn score(c: &[Vec<usize>], perm: &[usize]) -> usize {
    perm.iter().enumerate().map(|(b, &a)| c[a][b]).sum()
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Maximum-weight perfect matching on the confusion matrix (Hungarian method
/// with potentials, O(r³)).
fn best_permutation_hungarian(c: &[Vec<usize>]) -> Vec<usize> {
    let n = c.len();
    // minimize cost[b][a] = -c[a][b]; rows are true labels, columns estimated
    let cost = |b: usize, a: usize| -(c[a][b] as i64);
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let row0 = owner[col0];
            let mut delta = inf;
            let mut col1 = 0;
            for col in 1..=n {
                if !used[col] {
                    let cur = cost(row0 - 1, col - 1) - u[row0] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for col in 1..=n {
        perm[owner[col] - 1] = col - 1;
    }
    perm
}

/// Rescaled core rows `mat_mode(S ×_{j≠mode} Λ_j)`, where `core` has one
/// trailing unclustered mode beyond the clustered ones.
pub fn rescaled_core(core: &DenseTensor, memberships: &[Membership], mode: usize) -> Result<DMatrix<f64>> {
    let d = memberships.len();
    if core.order() != d + 1 {
        return Err(PmtcError::ShapeMismatch(format!(
            "core of order {} needs {} memberships plus a time mode",
            core.order(),
            core.order().saturating_sub(1)
        )));
    }
    let mut scaled = core.clone();
    for (j, m) in memberships.iter().enumerate() {
        if m.num_clusters() != core.dims()[j] {
            return Err(PmtcError::ShapeMismatch(format!("mode {j}: core has {} clusters", core.dims()[j])));
        }
        if j != mode {
            let lambda = DMatrix::from_diagonal(&m.scale()?);
            scaled = scaled.mode_product(j, &lambda)?;
        }
    }
    scaled.matricize(mode)
}

/// Average squared distance between the centre each entity was assigned to and
/// its true centre, after mapping estimated labels back through `perm`
/// (true label `b` ↔ estimated label `perm[b]`).
///
/// `centers` holds the rescaled core rows of this mode indexed by true label;
/// `outcome_centers`, when present, adds the outcome-matrix term.
pub fn misclustering_loss(
    est: &Membership,
    truth: &Membership,
    perm: &[usize],
    centers: &DMatrix<f64>,
    outcome_centers: Option<&DMatrix<f64>>,
) -> Result<f64> {
    let r = truth.num_clusters();
    confusion(est, truth)?;
    if !is_permutation(perm, r) {
        return Err(PmtcError::InvalidArgument(format!("{perm:?} is not a permutation")));
    }
    if centers.nrows() != r || outcome_centers.is_some_and(|s| s.nrows() != r) {
        return Err(PmtcError::ShapeMismatch("centre matrices need one row per cluster".into()));
    }
    let mut inverse = vec![0; r];
    for (b, &a) in perm.iter().enumerate() {
        inverse[a] = b;
    }
    let row_gap = |m: &DMatrix<f64>, x: usize, y: usize| (m.row(x) - m.row(y)).norm_squared();
    let total: f64 = est
        .labels()
        .iter()
        .zip(truth.labels())
        .map(|(&a, &b)| {
            let assigned = inverse[a];
            row_gap(centers, assigned, b) + outcome_centers.map_or(0.0, |s| row_gap(s, assigned, b))
        })
        .sum();
    Ok(total / est.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationStats {
    /// Δ_i² per clustered mode (mode 0 includes the outcome term).
    pub delta_sq: Vec<f64>,
    /// Δ_{i,x}² per clustered mode.
    pub delta_x_sq: Vec<f64>,
    /// Δ_y², when an outcome centre matrix was supplied.
    pub delta_y_sq: Option<f64>,
    /// min_i Δ_i.
    pub delta_min: f64,
}

impl SeparationStats {
    /// Some mode has two coincident centres.
    pub fn is_degenerate(&self) -> bool {
        self.delta_sq.iter().any(|&d| d <= 0.0)
    }

    /// min_i Δ_{i,x}².
    pub fn delta_x_min_sq(&self) -> f64 {
        self.delta_x_sq.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn min_pairwise(rows: &[DMatrix<f64>]) -> f64 {
    let r = rows[0].nrows();
    let mut best = f64::INFINITY;
    for a in 0..r {
        for b in a + 1..r {
            let d: f64 = rows.iter().map(|m| (m.row(a) - m.row(b)).norm_squared()).sum();
            best = best.min(d);
        }
    }
    best
}

/// Separation statistics of the block centres; modes with a single cluster
/// report +∞.
pub fn separations(
    core: &DenseTensor,
    memberships: &[Membership],
    outcome_centers: Option<&DMatrix<f64>>,
) -> Result<SeparationStats> {
    let d = memberships.len();
    let mut delta_sq = Vec::with_capacity(d);
    let mut delta_x_sq = Vec::with_capacity(d);
    if let Some(sy) = outcome_centers {
        if d == 0 || sy.nrows() != memberships[0].num_clusters() {
            return Err(PmtcError::ShapeMismatch("outcome centres need one row per mode-0 cluster".into()));
        }
    }
    for i in 0..d {
        let s_i = rescaled_core(core, memberships, i)?;
        let dx = min_pairwise(std::slice::from_ref(&s_i));
        delta_x_sq.push(dx);
        let full = match (i, outcome_centers) {
            (0, Some(sy)) => min_pairwise(&[s_i, sy.clone()]),
            _ => dx,
        };
        delta_sq.push(full);
    }
    let delta_y_sq = outcome_centers.map(|sy| min_pairwise(std::slice::from_ref(sy)));
    let delta_min = delta_sq.iter().copied().fold(f64::INFINITY, f64::min).sqrt();
    Ok(SeparationStats { delta_sq, delta_x_sq, delta_y_sq, delta_min })
}

/// Inputs for the total R² of a grouped factor model against the market
/// benchmark.
#[derive(Debug, Clone)]
pub struct EvalInput<'a> {
    /// `p1 x T` returns.
    pub returns: &'a DMatrix<f64>,
    /// `m1 x T` factor realizations.
    pub factors: &'a DMatrix<f64>,
    /// Length-T market excess return.
    pub market_excess: &'a DVector<f64>,
    pub membership: &'a Membership,
    /// `r1 x m1` group loadings.
    pub loadings: &'a DMatrix<f64>,
}

/// `1 − Σ(Y − fit)² / Σ(Y − R^mkt)²`, where `fit[i,t] = b_{g_i}ᵀ f_t`.
pub fn total_r2(input: &EvalInput<'_>) -> Result<f64> {
    let (p, t) = input.returns.shape();
    let (r, m) = input.loadings.shape();
    if input.factors.shape() != (m, t) {
        return Err(PmtcError::ShapeMismatch(format!(
            "factors are {:?}, expected {m}x{t}",
            input.factors.shape()
        )));
    }
    if input.market_excess.len() != t {
        return Err(PmtcError::ShapeMismatch(format!("market series has {} periods, expected {t}", input.market_excess.len())));
    }
    if input.membership.len() != p || input.membership.num_clusters() != r {
        return Err(PmtcError::ShapeMismatch("membership does not match returns and loadings".into()));
    }
    let group_fit = input.loadings * input.factors;
    let mut resid = 0.0;
    let mut bench = 0.0;
    for tt in 0..t {
        for i in 0..p {
            let y = input.returns[(i, tt)];
            resid += (y - group_fit[(input.membership.label(i), tt)]).powi(2);
            bench += (y - input.market_excess[tt]).powi(2);
        }
    }
    if bench == 0.0 {
        return Err(PmtcError::Degenerate("returns coincide with the market benchmark".into()));
    }
    Ok(1.0 - resid / bench)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_labels(p: usize, r: usize, rng: &mut ChaCha8Rng) -> Membership {
        Membership::new((0..p).map(|_| rng.gen_range(0..r)).collect(), r).unwrap()
    }

    /// Brute force over every permutation via recursion, independent of
    /// `next_permutation`.
    fn oracle_cer(est: &Membership, truth: &Membership) -> f64 {
        fn rec(r: usize, used: &mut Vec<bool>, perm: &mut Vec<usize>, est: &Membership, truth: &Membership, best: &mut usize) {
            if perm.len() == r {
                let wrong = est.labels().iter().zip(truth.labels()).filter(|(&a, &b)| a != perm[b]).count();
                *best = (*best).min(wrong);
                return;
            }
            for a in 0..r {
                if !used[a] {
                    used[a] = true;
                    perm.push(a);
                    rec(r, used, perm, est, truth, best);
                    perm.pop();
                    used[a] = false;
                }
            }
        }
        let r = truth.num_clusters();
        let mut best = usize::MAX;
        rec(r, &mut vec![false; r], &mut Vec::new(), est, truth, &mut best);
        best as f64 / est.len() as f64
    }

    #[test]
    fn permuted_truth_has_zero_cer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = random_labels(30, 4, &mut rng);
        let est = truth.permute_labels(&[2, 3, 1, 0]).unwrap();
        let (rate, perm) = cer(&est, &truth).unwrap();
        assert_eq!(rate, 0.0);
        assert_eq!(perm, vec![2, 3, 1, 0]);
    }

    #[test]
    fn one_flip_in_ten() {
        let truth = Membership::new(vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1], 2).unwrap();
        let est = Membership::new(vec![0, 0, 0, 0, 1, 1, 1, 1, 1, 1], 2).unwrap();
        assert!((cer(&est, &truth).unwrap().0 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn matches_permutation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let truth = random_labels(30, 4, &mut rng);
            let est = random_labels(30, 4, &mut rng);
            let oracle = oracle_cer(&est, &truth);
            for matching in [Matching::Exhaustive, Matching::Hungarian] {
                let (rate, perm) = cer_with(&est, &truth, matching).unwrap();
                assert!((rate - oracle).abs() < 1e-15);
                assert!((cer_fixed(&est, &truth, &perm).unwrap() - rate).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hungarian_handles_many_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = random_labels(200, 12, &mut rng);
        let mut perm: Vec<usize> = (0..12).collect();
        perm.rotate_left(5);
        let est = truth.permute_labels(&perm).unwrap();
        let (rate, found) = cer(&est, &truth).unwrap();
        assert_eq!(rate, 0.0);
        assert_eq!(found, perm);
    }

    #[test]
    fn cer_size_mismatch() {
        let a = Membership::new(vec![0, 1], 2).unwrap();
        let b = Membership::new(vec![0, 1, 1], 2).unwrap();
        let c = Membership::new(vec![0, 1], 3).unwrap();
        assert!(cer(&a, &b).is_err());
        assert!(cer(&a, &c).is_err());
    }

    #[test]
    fn cer_is_symmetric_and_obeys_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = random_labels(20, 3, &mut rng);
            let b = random_labels(20, 3, &mut rng);
            let c = random_labels(20, 3, &mut rng);
            let ab = cer(&a, &b).unwrap().0;
            assert!((ab - cer(&b, &a).unwrap().0).abs() < 1e-15);
            assert!(cer(&a, &c).unwrap().0 <= ab + cer(&b, &c).unwrap().0 + 1e-15);
        }
    }

    #[test]
    fn misclustering_loss_cases() {
        let truth = Membership::new(vec![0, 0, 1, 1, 2], 3).unwrap();
        let centers = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0]);
        let id = [0, 1, 2];
        assert_eq!(misclustering_loss(&truth, &truth, &id, &centers, None).unwrap(), 0.0);
        let single = Membership::single(5);
        let one = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert_eq!(misclustering_loss(&single, &single, &[0], &one, Some(&one)).unwrap(), 0.0);

        // direct sum: entity 1 put in cluster 2, entity 4 put in cluster 0
        let est = Membership::new(vec![0, 2, 1, 1, 0], 3).unwrap();
        let sy = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 0.5]);
        let oracle = ((0.0f64 - 0.0).powi(2) + (2.0f64 - 0.0).powi(2) + (0.5f64 - 1.0).powi(2)
            + (0.0f64 - 0.0).powi(2) + (0.0f64 - 2.0).powi(2) + (1.0f64 - 0.5).powi(2))
            / 5.0;
        let got = misclustering_loss(&est, &truth, &id, &centers, Some(&sy)).unwrap();
        assert!((got - oracle).abs() < 1e-14);
        // relabel the estimate: same loss with the matching permutation
        let est2 = est.permute_labels(&[1, 2, 0]).unwrap();
        let got2 = misclustering_loss(&est2, &truth, &[1, 2, 0], &centers, Some(&sy)).unwrap();
        assert!((got2 - oracle).abs() < 1e-14);
    }

    #[test]
    fn separations_single_cluster_is_infinite() {
        let core = DenseTensor::from_fn(&[1, 2, 3], |ix| ix[1] as f64 + ix[2] as f64);
        let ms = vec![Membership::single(4), Membership::new(vec![0, 1, 1], 2).unwrap()];
        let s = separations(&core, &ms, None).unwrap();
        assert!(s.delta_sq[0].is_infinite());
        assert!(s.delta_sq[1].is_finite() && s.delta_sq[1] > 0.0);
    }

    #[test]
    fn separations_flag_identical_centres() {
        let core = DenseTensor::from_fn(&[2, 1, 2], |ix| ix[2] as f64);
        let ms = vec![Membership::new(vec![0, 1], 2).unwrap(), Membership::single(3)];
        let s = separations(&core, &ms, None).unwrap();
        assert_eq!(s.delta_sq[0], 0.0);
        assert!(s.is_degenerate());
    }

    #[test]
    fn separations_match_pairwise_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let core = DenseTensor::from_fn(&[3, 2, 4], |_| rng.gen_range(-1.0..1.0));
        let m0 = Membership::new(vec![0, 1, 2, 2, 1, 0, 0], 3).unwrap();
        let m1 = Membership::new(vec![0, 1, 1, 1, 0], 2).unwrap();
        let sy = DMatrix::from_fn(3, 4, |_, _| rng.gen_range(-1.0..1.0));
        let s = separations(&core, &[m0.clone(), m1.clone()], Some(&sy)).unwrap();
        // oracle from explicit scaled entries: S_0[a, (b,t)] = sqrt(n1_b) core[a,b,t]
        let n0 = [3.0f64, 2.0, 2.0];
        let n1 = [2.0f64, 3.0];
        let mut dx0 = f64::INFINITY;
        let mut d0 = f64::INFINITY;
        let mut dy = f64::INFINITY;
        for a in 0..3 {
            for c in a + 1..3 {
                let mut x = 0.0;
                for b in 0..2 {
                    for t in 0..4 {
                        x += n1[b] * (core.get(&[a, b, t]) - core.get(&[c, b, t])).powi(2);
                    }
                }
                let y: f64 = (0..4).map(|t| (sy[(a, t)] - sy[(c, t)]).powi(2)).sum();
                dx0 = dx0.min(x);
                dy = dy.min(y);
                d0 = d0.min(x + y);
            }
        }
        let mut dx1 = 0.0;
        for a in 0..3 {
            for t in 0..4 {
                dx1 += n0[a] * (core.get(&[a, 0, t]) - core.get(&[a, 1, t])).powi(2);
            }
        }
        assert!((s.delta_x_sq[0] - dx0).abs() < 1e-12);
        assert!((s.delta_sq[0] - d0).abs() < 1e-12);
        assert!((s.delta_y_sq.unwrap() - dy).abs() < 1e-12);
        assert!((s.delta_x_sq[1] - dx1).abs() < 1e-12);
        assert!(s.delta_sq[0] >= s.delta_x_sq[0] + s.delta_y_sq.unwrap() - 1e-12);
    }

    fn r2_fixture() -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, Membership, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = Membership::new(vec![0, 1, 1, 0, 1], 2).unwrap();
        let b = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let f = DMatrix::from_fn(2, 7, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(5, 7, |_, _| rng.gen_range(-1.0..1.0));
        let mkt = DVector::from_fn(7, |_, _| rng.gen_range(-1.0..1.0));
        (y, f, mkt, m, b)
    }

    #[test]
    fn total_r2_perfect_and_benchmark() {
        let (_, f, mkt, m, b) = r2_fixture();
        let fitted = m.one_hot() * &b * &f;
        let input = EvalInput { returns: &fitted, factors: &f, market_excess: &mkt, membership: &m, loadings: &b };
        assert!((total_r2(&input).unwrap() - 1.0).abs() < 1e-15);

        // loadings (1, 0) on a factor equal to the market give exactly the benchmark
        let mut f2 = f.clone();
        f2.row_mut(0).copy_from(&mkt.transpose());
        let b2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let (y, ..) = r2_fixture();
        let input = EvalInput { returns: &y, factors: &f2, market_excess: &mkt, membership: &m, loadings: &b2 };
        assert!(total_r2(&input).unwrap().abs() < 1e-14);
    }

    #[test]
    fn total_r2_matches_double_sum() {
        let (y, f, mkt, m, b) = r2_fixture();
        let input = EvalInput { returns: &y, factors: &f, market_excess: &mkt, membership: &m, loadings: &b };
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..5 {
            for t in 0..7 {
                let g = m.label(i);
                let fit: f64 = (0..2).map(|k| b[(g, k)] * f[(k, t)]).sum();
                num += (y[(i, t)] - fit).powi(2);
                den += (y[(i, t)] - mkt[t]).powi(2);
            }
        }
        assert!((total_r2(&input).unwrap() - (1.0 - num / den)).abs() < 1e-14);
    }

    #[test]
    fn total_r2_zero_denominator() {
        let m = Membership::single(2);
        let y = DMatrix::from_element(2, 3, 0.5);
        let mkt = DVector::from_element(3, 0.5);
        let f = DMatrix::zeros(1, 3);
        let b = DMatrix::zeros(1, 1);
        let input = EvalInput { returns: &y, factors: &f, market_excess: &mkt, membership: &m, loadings: &b };
        assert!(matches!(total_r2(&input), Err(PmtcError::Degenerate(_))));
    }
}
