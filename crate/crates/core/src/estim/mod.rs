//! Regression engine: absorbed WLS, clustered inference, bootstrap, DiD and event studies.

pub mod absorb;
pub mod bootstrap;
pub mod panel;
pub mod wls;
pub mod xocc;

pub use absorb::Factor;
pub use bootstrap::{wild_cluster_bootstrap, BootstrapResult};
pub use panel::{did, did_problem, event_study, parse_cluster, EventStudyFit, FeDim, FeVar, FixedEffectSpec, DID_TERM};
pub use wls::{fit_prepared, prepare, wls_absorbed, Prepared, RegressionFit, WlsProblem};
pub use xocc::{cochran_q, cross_occ_regression, spearman_occ, CochranQ, XOCC_TERM};
