//! Panel coupled matrix-tensor clustering.
//!
//! A characteristics tensor `X` (entities × … × time) and an outcome panel
//! `Y` (entities × time) share their first-mode cluster structure. This crate
//! estimates that structure and the group-level factor loadings:
//!
//! 1. [`pchooi`] estimates coupled low-rank subspaces,
//! 2. [`pmtsc`] turns them into initial memberships with relaxed k-means,
//! 3. [`lloyd`] refines the memberships with projected Lloyd iterations,
//! 4. [`factors`] estimates group loadings from the final memberships.
//!
//! [`simulate`] and [`experiment`] generate synthetic designs and run Monte
//! Carlo comparisons; [`metrics`] scores the results.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod factors;
pub mod io;
pub mod kmeans;
pub mod linalg;
pub mod lloyd;
pub mod membership;
pub mod metrics;
pub mod par;
pub mod pchooi;
pub mod pipeline;
pub mod pmtsc;
pub mod simulate;
pub mod experiment;
pub mod tensor;

pub use data::CoupledData;
pub use error::{PmtcError, Result};
pub use linalg::{lsvd, subspace_distance, OrthonormalBasis};
pub use membership::Membership;
pub use par::Exec;
pub use tensor::DenseTensor;
