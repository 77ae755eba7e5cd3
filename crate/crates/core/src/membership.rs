//! Cluster label vectors and the matrices derived from them.
//!
//! Labels are 0-based in memory and 1-based in serialized output.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{PmtcError, Result};
use crate::linalg::OrthonormalBasis;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Membership {
    labels: Vec<usize>,
    num_clusters: usize,
    sizes: Vec<usize>,
}

impl Membership {
    pub fn new(labels: Vec<usize>, num_clusters: usize) -> Result<Self> {
        if num_clusters == 0 {
            return Err(PmtcError::InvalidMembership("need at least one cluster".into()));
        }
        let mut sizes = vec![0; num_clusters];
        for (j, &g) in labels.iter().enumerate() {
            if g >= num_clusters {
                return Err(PmtcError::InvalidMembership(format!(
                    "label {g} of entity {j} is outside 0..{num_clusters}"
                )));
            }
            sizes[g] += 1;
        }
        Ok(Self { labels, num_clusters, sizes })
    }

    /// Everyone in one cluster.
    pub fn single(p: usize) -> Self {
        Self { labels: vec![0; p], num_clusters: 1, sizes: vec![p] }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> usize {
        self.labels[j]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn first_empty_cluster(&self) -> Option<usize> {
        self.sizes.iter().position(|&s| s == 0)
    }

    fn require_nonempty(&self) -> Result<()> {
        match self.first_empty_cluster() {
            Some(a) => Err(PmtcError::EmptyCluster(a)),
            None => Ok(()),
        }
    }

    /// Binary `p x r` matrix M with `M[j, g_j] = 1`.
    pub fn one_hot(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.len(), self.num_clusters);
        for (j, &g) in self.labels.iter().enumerate() {
            m[(j, g)] = 1.0;
        }
        m
    }

    /// `P = M (MᵀM)⁻¹`: column `a` averages over the members of cluster `a`.
    pub fn projector(&self) -> Result<DMatrix<f64>> {
        self.require_nonempty()?;
        let mut p = DMatrix::zeros(self.len(), self.num_clusters);
        for (j, &g) in self.labels.iter().enumerate() {
            p[(j, g)] = 1.0 / self.sizes[g] as f64;
        }
        Ok(p)
    }

    /// Diagonal of `Λ = diag(√size_a)`.
    pub fn scale(&self) -> Result<DVector<f64>> {
        self.require_nonempty()?;
        Ok(DVector::from_iterator(self.num_clusters, self.sizes.iter().map(|&s| (s as f64).sqrt())))
    }

    /// `W = M Λ⁻¹`, the normalized columns of M.
    pub fn normalized_basis(&self) -> Result<OrthonormalBasis> {
        self.require_nonempty()?;
        let mut w = DMatrix::zeros(self.len(), self.num_clusters);
        for (j, &g) in self.labels.iter().enumerate() {
            w[(j, g)] = 1.0 / (self.sizes[g] as f64).sqrt();
        }
        Ok(OrthonormalBasis::from_unchecked(w))
    }

    /// Relabels through `perm`, so that entity `j` gets `perm[g_j]`.
    pub fn permute_labels(&self, perm: &[usize]) -> Result<Self> {
        if !is_permutation(perm, self.num_clusters) {
            return Err(PmtcError::InvalidArgument(format!(
                "{perm:?} is not a permutation of 0..{}",
                self.num_clusters
            )));
        }
        let labels = self.labels.iter().map(|&g| perm[g]).collect();
        Membership::new(labels, self.num_clusters)
    }

    /// Writes `id,cluster` rows with 1-based ids and clusters.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "cluster"])?;
        for (j, &g) in self.labels.iter().enumerate() {
            w.write_record([(j + 1).to_string(), (g + 1).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`Membership::write_csv`]. The number of
    /// clusters is the largest label seen unless `num_clusters` is given.
    pub fn read_csv<R: Read>(reader: R, num_clusters: Option<usize>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows: Vec<(usize, usize)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<usize> {
                rec.get(k)
                    .and_then(|s| s.trim().parse::<usize>().ok())
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| PmtcError::Format(format!("bad membership row {rec:?}")))
            };
            rows.push((parse(0)?, parse(1)?));
        }
        rows.sort_unstable();
        for (expected, &(id, _)) in rows.iter().enumerate() {
            if id != expected + 1 {
                return Err(PmtcError::Format(format!("membership ids must be 1..=p, missing {}", expected + 1)));
            }
        }
        let r = num_clusters.unwrap_or_else(|| rows.iter().map(|&(_, g)| g).max().unwrap_or(1));
        Membership::new(rows.into_iter().map(|(_, g)| g - 1).collect(), r)
    }
}

pub(crate) fn is_permutation(perm: &[usize], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_membership(p: usize, r: usize, seed: u64) -> Membership {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let labels: Vec<usize> = (0..p).map(|_| rng.gen_range(0..r)).collect();
            let m = Membership::new(labels, r).unwrap();
            if m.first_empty_cluster().is_none() {
                return m;
            }
        }
    }

    #[test]
    fn one_hot_examples() {
        let m = Membership::new(vec![0, 1, 0], 2).unwrap();
        assert_eq!(m.one_hot(), DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]));
        let single = Membership::new(vec![0, 0, 0], 1).unwrap();
        assert_eq!(single.one_hot(), DMatrix::from_element(3, 1, 1.0));
    }

    #[test]
    fn one_hot_gram_is_diagonal_of_sizes() {
        let m = random_membership(20, 4, 1);
        let oh = m.one_hot();
        let mut counts = vec![0.0; 4];
        for &g in m.labels() {
            counts[g] += 1.0;
        }
        assert_eq!(oh.transpose() * &oh, DMatrix::from_diagonal(&DVector::from_vec(counts)));
        assert!(oh.row_iter().all(|row| row.sum() == 1.0));
    }

    #[test]
    fn projector_examples() {
        let m = Membership::new(vec![0, 1], 2).unwrap();
        assert_eq!(m.projector().unwrap(), DMatrix::identity(2, 2));
        let m = Membership::new(vec![0, 0], 1).unwrap();
        assert_eq!(m.projector().unwrap().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn projector_gives_group_means() {
        let m = random_membership(15, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DVector::from_fn(15, |_, _| rng.gen_range(-5.0..5.0));
        let means = m.projector().unwrap().transpose() * &x;
        for a in 0..3 {
            let members: Vec<f64> = (0..15).filter(|&j| m.label(j) == a).map(|j| x[j]).collect();
            let oracle = members.iter().sum::<f64>() / members.len() as f64;
            assert!((means[a] - oracle).abs() < 1e-12);
        }
        let mtp = m.one_hot().transpose() * m.projector().unwrap();
        assert!((mtp - DMatrix::<f64>::identity(3, 3)).amax() <= 1e-12);
    }

    #[test]
    fn empty_cluster_is_an_error() {
        let m = Membership::new(vec![0, 0, 2], 3).unwrap();
        assert!(matches!(m.projector(), Err(PmtcError::EmptyCluster(1))));
        assert!(matches!(m.normalized_basis(), Err(PmtcError::EmptyCluster(1))));
        assert!(matches!(m.scale(), Err(PmtcError::EmptyCluster(1))));
    }

    #[test]
    fn out_of_range_label_rejected() {
        assert!(Membership::new(vec![0, 2], 2).is_err());
        assert!(Membership::new(vec![], 0).is_err());
    }

    #[test]
    fn normalized_basis_examples() {
        let m = Membership::new(vec![0, 0, 1, 1], 2).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert_eq!(m.scale().unwrap().as_slice(), &[2f64.sqrt(), 2f64.sqrt()]);
        let w = m.normalized_basis().unwrap();
        assert_eq!(w.matrix().as_slice(), &[h, h, 0.0, 0.0, 0.0, 0.0, h, h]);
        let single = Membership::single(4);
        assert_eq!(single.normalized_basis().unwrap().matrix().as_slice(), &[0.5; 4]);
    }

    #[test]
    fn normalized_basis_reconstructs_one_hot() {
        let m = random_membership(30, 5, 4);
        let w = m.normalized_basis().unwrap();
        let lambda = DMatrix::from_diagonal(&m.scale().unwrap());
        assert_eq!((w.matrix() * lambda - m.one_hot()).amax(), 0.0);
        assert!(OrthonormalBasis::new(w.into_matrix()).is_ok());
    }

    #[test]
    fn permute_labels_examples() {
        let m = Membership::new(vec![0, 1, 1], 2).unwrap();
        assert_eq!(m.permute_labels(&[0, 1]).unwrap(), m);
        let swapped = m.permute_labels(&[1, 0]).unwrap();
        assert_eq!(swapped.labels(), &[1, 0, 0]);
        assert_eq!(swapped.cluster_sizes(), &[2, 1]);
        assert!(m.permute_labels(&[0, 0]).is_err());
        assert!(m.permute_labels(&[0]).is_err());
    }

    #[test]
    fn permute_labels_composes() {
        let m = random_membership(25, 4, 5);
        let pi = [2, 0, 3, 1];
        let rho = [1, 3, 0, 2];
        let composed: Vec<usize> = (0..4).map(|a| rho[pi[a]]).collect();
        let lhs = m.permute_labels(&pi).unwrap().permute_labels(&rho).unwrap();
        assert_eq!(lhs, m.permute_labels(&composed).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let m = random_membership(12, 3, 6);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,cluster\n1,"));
        assert_eq!(Membership::read_csv(buf.as_slice(), Some(3)).unwrap(), m);
    }
}
