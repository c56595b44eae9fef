//! Occupation-level regressions and cross-measure summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::wls::{wls_absorbed, RegressionFit, WlsProblem};
use crate::error::{Error, Result};
use crate::exposure::ExposureVector;
use crate::ingest::OccOutcomeTable;
use crate::occ::OccId;
use crate::stats;

pub const XOCC_TERM: &str = "exposure_sd";

/// Outcome on weighted-standardized exposure with an intercept, weighted by the
/// outcome table's weights. Errors are heteroskedasticity-robust.
pub fn cross_occ_regression(outcomes: &OccOutcomeTable, exposure: &ExposureVector) -> Result<RegressionFit> {
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut w = Vec::new();
    for (occ, row) in outcomes.iter() {
        if let Some(e) = exposure.get(occ) {
            y.push(row.value);
            x.push(e);
            w.push(row.weight);
        }
    }
    if y.len() < 3 {
        return Err(Error::Degenerate(format!(
            "cross-occupation regression needs >= 3 common occupations, found {}",
            y.len()
        )));
    }
    let m = stats::weighted_mean(&x, &w);
    let sd = stats::weighted_variance(&x, &w).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate("exposure is constant across occupations".into()));
    }
    let z: Vec<f64> = x.iter().map(|v| (v - m) / sd).collect();
    wls_absorbed(&WlsProblem::new(y, vec![z], vec![XOCC_TERM.to_string()], w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CochranQ {
    pub q: f64,
    pub df: usize,
    pub p: f64,
}

/// Fixed-effect homogeneity test Q = Σ w_i(β_i − β̄_w)², w_i = 1/se_i².
pub fn cochran_q(coefs: &[f64], ses: &[f64]) -> Result<CochranQ> {
    if coefs.len() != ses.len() {
        return Err(Error::InvalidArgument("coefficient and SE lists differ in length".into()));
    }
    if coefs.len() < 2 {
        return Err(Error::InvalidArgument("Cochran Q needs at least two estimates".into()));
    }
    if ses.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("standard errors must be > 0".into()));
    }
    let w: Vec<f64> = ses.iter().map(|s| 1.0 / (s * s)).collect();
    // centred on the first estimate so identical inputs give exactly zero
    let b0 = coefs[0];
    let sw: f64 = w.iter().sum();
    let s1: f64 = coefs.iter().zip(&w).map(|(b, wi)| wi * (b - b0)).sum();
    let s2: f64 = coefs.iter().zip(&w).map(|(b, wi)| wi * (b - b0).powi(2)).sum();
    let q = (s2 - s1 * s1 / sw).max(0.0);
    let df = coefs.len() - 1;
    let p = if q <= 0.0 { 1.0 } else { stats::chi_squared_sf(q, df as f64)? };
    Ok(CochranQ { q, df, p })
}

/// Spearman correlation over the occupations two vectors share.
pub fn spearman_occ(x: &BTreeMap<OccId, f64>, y: &BTreeMap<OccId, f64>) -> Result<f64> {
    let (a, b): (Vec<f64>, Vec<f64>) = x.iter().filter_map(|(k, v)| y.get(k).map(|u| (*v, *u))).unzip();
    if a.len() < 2 {
        return Err(Error::DisjointSupport("spearman inputs share fewer than two occupations".into()));
    }
    Ok(stats::spearman(&a, &b))
}
