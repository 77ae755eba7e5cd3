//! Group-level factor loadings given the final asset memberships.
//!
//! Returns are first averaged within each asset group. By default the average
//! is the plain group mean (`P_1ᵀY` with `P_1 = M_1(M_1ᵀM_1)⁻¹`), so that on
//! noiseless data the observed-factor estimate reproduces `B` itself.
//! [`Averaging::Normalized`] uses the orthonormal basis `W_1ᵀY` instead, whose
//! noiseless observed-factor value is `Λ_1 B` with `Λ_1 = diag(√|G_a|)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{PmtcError, Result};
use crate::linalg::{spd_inverse, top_symmetric_eigenvectors, OrthonormalBasis};
use crate::membership::Membership;

/// Largest accepted condition number of `FFᵀ`.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    GroupMean,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Latent,
    Observed,
}

#[derive(Debug, Clone)]
pub struct FactorEstimate {
    pub kind: FactorKind,
    /// `r1 x m1` group loadings: `B̂` for observed factors, the orthonormal
    /// `Û_B` for latent ones.
    pub loadings: DMatrix<f64>,
    /// Latent factor estimates `F̂ = Û_BᵀP̂_1ᵀY` (`m1 x T`).
    pub factors: Option<DMatrix<f64>>,
    /// Leading eigenvalues of the pooled second moment (latent only).
    pub eigenvalues: Option<Vec<f64>>,
}

impl FactorEstimate {
    /// Orthonormal loading basis of a latent estimate.
    pub fn loading_basis(&self) -> Result<OrthonormalBasis> {
        match self.kind {
            FactorKind::Latent => OrthonormalBasis::new(self.loadings.clone()),
            FactorKind::Observed => OrthonormalBasis::orthonormalize(&self.loadings),
        }
    }

    /// Group-level fitted returns `B̂ f_t` (`r1 x T`).
    pub fn group_fit(&self, factors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if factors.nrows() != self.loadings.ncols() {
            return Err(PmtcError::ShapeMismatch(format!(
                "{} factor series for {} loading columns",
                factors.nrows(),
                self.loadings.ncols()
            )));
        }
        Ok(&self.loadings * factors)
    }
}

fn group_average(y: &DMatrix<f64>, m1: &Membership, averaging: Averaging) -> Result<DMatrix<f64>> {
    if y.nrows() != m1.len() {
        return Err(PmtcError::ShapeMismatch(format!("returns have {} rows, membership {} entries", y.nrows(), m1.len())));
    }
    let reducer = match averaging {
        Averaging::GroupMean => m1.projector()?,
        Averaging::Normalized => m1.normalized_basis()?.into_matrix(),
    };
    Ok(reducer.transpose() * y)
}

fn demean_rows(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    out
}

/// Principal-component loadings of the group-averaged returns.
pub fn estimate_latent(y: &DMatrix<f64>, m1: &Membership, num_factors: usize, averaging: Averaging) -> Result<FactorEstimate> {
    let r = m1.num_clusters();
    if num_factors == 0 || num_factors > r {
        return Err(PmtcError::InvalidArgument(format!("{num_factors} latent factors for {r} groups")));
    }
    let grouped = group_average(y, m1, averaging)?;
    let t = y.ncols() as f64;
    let second_moment = &grouped * grouped.transpose() / t;
    let (basis, eigenvalues) = top_symmetric_eigenvectors(second_moment, num_factors)?;
    if !(eigenvalues[num_factors - 1] > 0.0) {
        return Err(PmtcError::Degenerate(format!(
            "pooled second moment has only {} positive eigenvalues, {num_factors} requested",
            eigenvalues.iter().filter(|&&v| v > 0.0).count()
        )));
    }
    let loadings = basis.into_matrix();
    let factors = loadings.transpose() * grouped;
    Ok(FactorEstimate { kind: FactorKind::Latent, loadings, factors: Some(factors), eigenvalues: Some(eigenvalues) })
}

/// Least-squares loadings on observed factors (`B̂ = ȲFᵀ(FFᵀ)⁻¹` with `Ȳ` the
/// group-averaged returns). With `demean`, both `Y` and `F` are demeaned over
/// time first.
pub fn estimate_observed(
    y: &DMatrix<f64>,
    m1: &Membership,
    factors: &DMatrix<f64>,
    demean: bool,
    averaging: Averaging,
) -> Result<FactorEstimate> {
    if factors.ncols() != y.ncols() {
        return Err(PmtcError::ShapeMismatch(format!("factors span {} periods, returns {}", factors.ncols(), y.ncols())));
    }
    let grouped = group_average(y, m1, averaging)?;
    let loadings = regress(&grouped, factors, demean)?;
    Ok(FactorEstimate { kind: FactorKind::Observed, loadings, factors: None, eigenvalues: None })
}

/// Row-wise OLS of `y` on `f` without intercept.
fn regress(y: &DMatrix<f64>, f: &DMatrix<f64>, demean: bool) -> Result<DMatrix<f64>> {
    let (y, f) = if demean { (demean_rows(y), demean_rows(f)) } else { (y.clone(), f.clone()) };
    let gram = &f * f.transpose();
    let inv = spd_inverse(&gram, MAX_CONDITION)?;
    Ok(y * f.transpose() * inv)
}

/// Ungrouped per-asset least squares (`p1 x m1`), the baseline the grouped
/// estimator is compared with.
pub fn per_asset_ols(y: &DMatrix<f64>, factors: &DMatrix<f64>, demean: bool) -> Result<DMatrix<f64>> {
    if factors.ncols() != y.ncols() {
        return Err(PmtcError::ShapeMismatch(format!("factors span {} periods, returns {}", factors.ncols(), y.ncols())));
    }
    regress(y, factors, demean)
}

/// Loadings gathered per asset: row `j` is the row of `j`'s group.
pub fn per_asset_loadings(loadings: &DMatrix<f64>, m1: &Membership) -> Result<DMatrix<f64>> {
    if loadings.nrows() != m1.num_clusters() {
        return Err(PmtcError::ShapeMismatch(format!("{} loading rows for {} groups", loadings.nrows(), m1.num_clusters())));
    }
    Ok(DMatrix::from_fn(m1.len(), loadings.ncols(), |j, k| loadings[(m1.label(j), k)]))
}

/// Largest Euclidean row error between two loading matrices.
pub fn max_row_error(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    (est - truth).row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Writes group loadings as `cluster,f1,..,fm` (clusters 1-based).
pub fn write_loadings_csv<W: Write>(loadings: &DMatrix<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["cluster".to_string()];
    header.extend((1..=loadings.ncols()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for (a, row) in loadings.row_iter().enumerate() {
        let mut rec = vec![(a + 1).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes per-asset loadings as `id,cluster,f1,..,fm` (both 1-based).
pub fn write_asset_loadings_csv<W: Write>(loadings: &DMatrix<f64>, m1: &Membership, writer: W) -> Result<()> {
    let expanded = per_asset_loadings(loadings, m1)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "cluster".to_string()];
    header.extend((1..=loadings.ncols()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for (j, row) in expanded.row_iter().enumerate() {
        let mut rec = vec![(j + 1).to_string(), (m1.label(j) + 1).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `cluster,f1,..` loadings file written by [`write_loadings_csv`].
pub fn read_loadings_csv<R: std::io::Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| PmtcError::Format(format!("bad loading value {s:?}")));
        let cluster = parse(&rec[0])? as usize;
        let vals = rec.iter().skip(1).map(parse).collect::<Result<Vec<f64>>>()?;
        rows.push((cluster, vals));
    }
    let r = rows.len();
    let m = rows.first().map_or(0, |(_, v)| v.len());
    if r == 0 || m == 0 {
        return Err(PmtcError::Format("empty loadings file".into()));
    }
    let mut out = DMatrix::zeros(r, m);
    let mut seen = vec![false; r];
    for (cluster, vals) in rows {
        if cluster == 0 || cluster > r || seen[cluster - 1] || vals.len() != m {
            return Err(PmtcError::Format(format!("loadings row for cluster {cluster} is malformed")));
        }
        seen[cluster - 1] = true;
        out.row_mut(cluster - 1).copy_from(&DVector::from_vec(vals).transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{lsvd, subspace_distance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn setup(seed: u64) -> (Membership, DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m1 = Membership::new((0..17).map(|j| (j * 5) % 4).collect(), 4).unwrap();
        (m1, gaussian(4, 2, &mut rng), gaussian(2, 30, &mut rng))
    }

    #[test]
    fn noiseless_observed_recovers_b() {
        let (m1, b, f) = setup(1);
        let y = m1.one_hot() * &b * &f;
        let est = estimate_observed(&y, &m1, &f, false, Averaging::GroupMean).unwrap();
        assert!((est.loadings - &b).amax() < 1e-10);
        let raw = estimate_observed(&y, &m1, &f, false, Averaging::Normalized).unwrap();
        let lambda = DMatrix::from_diagonal(&m1.scale().unwrap());
        assert!((raw.loadings - lambda * &b).amax() < 1e-10);
    }

    #[test]
    fn demeaned_estimate_ignores_constant_shift() {
        let (m1, b, f) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = m1.one_hot() * &b * &f + gaussian(17, 30, &mut rng) * 0.1;
        let shift = DVector::from_fn(17, |j, _| j as f64 - 3.0);
        let mut shifted = y.clone();
        for mut col in shifted.column_iter_mut() {
            col += &shift;
        }
        let a = estimate_observed(&y, &m1, &f, true, Averaging::GroupMean).unwrap();
        let c = estimate_observed(&shifted, &m1, &f, true, Averaging::GroupMean).unwrap();
        assert!((a.loadings - c.loadings).amax() < 1e-10);
    }

    #[test]
    fn identity_factors_give_group_means() {
        let m1 = Membership::new(vec![0, 1, 0, 1, 1], 2).unwrap();
        let y = DMatrix::from_row_slice(5, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let est = estimate_observed(&y, &m1, &DMatrix::identity(2, 2), false, Averaging::GroupMean).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 19.0 / 3.0, 22.0 / 3.0]);
        assert!((est.loadings - expected).amax() < 1e-12);
    }

    #[test]
    fn noiseless_latent_spans_b() {
        let (m1, b, f) = setup(4);
        let y = m1.one_hot() * &b * &f;
        let est = estimate_latent(&y, &m1, 2, Averaging::GroupMean).unwrap();
        let ub = est.loading_basis().unwrap();
        assert!(subspace_distance(&ub, &lsvd(&b, 2).unwrap()).unwrap() < 1e-8);
        assert_eq!(est.factors.as_ref().unwrap().shape(), (2, 30));
        // the rank-2 fit is exact on noiseless returns
        let fit = est.group_fit(est.factors.as_ref().unwrap()).unwrap();
        assert!((fit - &b * &f).amax() < 1e-9);

        let raw = estimate_latent(&y, &m1, 2, Averaging::Normalized).unwrap();
        let lambda_b = DMatrix::from_diagonal(&m1.scale().unwrap()) * &b;
        assert!(subspace_distance(&raw.loading_basis().unwrap(), &lsvd(&lambda_b, 2).unwrap()).unwrap() < 1e-8);
    }

    #[test]
    fn zero_returns_are_degenerate() {
        let (m1, _, _) = setup(5);
        let err = estimate_latent(&DMatrix::zeros(17, 10), &m1, 1, Averaging::GroupMean).unwrap_err();
        assert!(matches!(err, PmtcError::Degenerate(_)));
        assert!(estimate_latent(&DMatrix::zeros(17, 10), &m1, 5, Averaging::GroupMean).is_err());
    }

    #[test]
    fn singular_factor_gram_is_rejected() {
        let (m1, _, _) = setup(6);
        let f = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let y = DMatrix::from_element(17, 3, 1.0);
        assert!(matches!(estimate_observed(&y, &m1, &f, false, Averaging::GroupMean), Err(PmtcError::Singular(_))));
        assert!(estimate_observed(&y, &m1, &DMatrix::zeros(2, 4), false, Averaging::GroupMean).is_err());
    }

    #[test]
    fn gathers_rows_by_label() {
        let m1 = Membership::new(vec![1, 0, 1, 2], 3).unwrap();
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let per = per_asset_loadings(&b, &m1).unwrap();
        for j in 0..4 {
            assert_eq!(per.row(j), b.row(m1.label(j)));
        }
        let single = per_asset_loadings(&b.rows(0, 1).into_owned(), &Membership::single(4)).unwrap();
        assert!(single.row_iter().all(|r| r == b.row(0)));
    }

    #[test]
    fn ungrouped_ols_matches_grouped_on_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = gaussian(4, 20, &mut rng);
        let f = gaussian(2, 20, &mut rng);
        let singletons = Membership::new(vec![0, 1, 2, 3], 4).unwrap();
        let a = per_asset_ols(&y, &f, true).unwrap();
        let b = estimate_observed(&y, &singletons, &f, true, Averaging::GroupMean).unwrap();
        assert!((a - b.loadings).amax() < 1e-12);
    }

    #[test]
    fn loadings_csv_round_trip() {
        let b = DMatrix::from_row_slice(2, 3, &[0.5, -1.25, 3.0, 0.25, 7.0, -0.1]);
        let mut buf = Vec::new();
        write_loadings_csv(&b, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("cluster,f1,f2,f3\n1,"));
        assert_eq!(read_loadings_csv(buf.as_slice()).unwrap(), b);
        let mut per = Vec::new();
        write_asset_loadings_csv(&b, &Membership::new(vec![1, 0, 1], 2).unwrap(), &mut per).unwrap();
        let text = String::from_utf8(per).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "1,2,0.25,7,-0.1");
    }
}
