//! Weighted least squares after fixed-effect absorption, with cluster-robust variance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::absorb::{demean_in_place, Factor, DEFAULT_MAX_SWEEPS, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::stats;

/// A regression with regressors given as columns.
#[derive(Debug, Clone)]
pub struct WlsProblem {
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub weights: Vec<f64>,
    /// Absorbed factors. Empty means an intercept only.
    pub factors: Vec<Factor>,
    /// Cluster factor. `None` treats every observation as its own cluster.
    pub cluster: Option<Factor>,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl WlsProblem {
    pub fn new(y: Vec<f64>, x: Vec<Vec<f64>>, names: Vec<String>, weights: Vec<f64>) -> Self {
        WlsProblem {
            y,
            x,
            names,
            weights,
            factors: Vec::new(),
            cluster: None,
            tolerance: DEFAULT_TOLERANCE,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }

    pub fn absorb(mut self, factors: Vec<Factor>) -> Self {
        self.factors = factors;
        self
    }

    pub fn cluster(mut self, cluster: Option<Factor>) -> Self {
        self.cluster = cluster;
        self
    }
}

/// The partialled-out design shared by the point fit and the bootstrap.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub names: Vec<String>,
    /// Cluster code per observation, dense in `0..clusters`.
    pub cluster: Vec<u32>,
    pub clusters: usize,
    pub clustered: bool,
    pub cluster_dim: String,
    pub n: usize,
    /// Explicit slopes, plus the intercept when nothing else is absorbed.
    pub k: usize,
    pub absorbed: Vec<String>,
    pub sweeps: usize,
    tss_raw: f64,
}

impl Prepared {
    pub fn small_sample_factor(&self) -> f64 {
        let (g, n, k) = (self.clusters as f64, self.n as f64, self.k as f64);
        g / (g - 1.0) * (n - 1.0) / (n - k)
    }

    /// Degrees of freedom for t-based inference.
    pub fn df(&self) -> f64 {
        if self.clustered {
            (self.clusters - 1) as f64
        } else {
            (self.n - self.k) as f64
        }
    }
}

/// Demean y and X by the factors and resolve clusters.
pub fn prepare(p: &WlsProblem) -> Result<Prepared> {
    let n = p.y.len();
    if p.x.len() != p.names.len() {
        return Err(Error::InvalidArgument("one name per regressor required".into()));
    }
    if p.x.is_empty() {
        return Err(Error::InvalidArgument("at least one regressor required".into()));
    }
    if p.weights.len() != n || p.x.iter().any(|c| c.len() != n) || p.factors.iter().any(|f| f.len() != n) {
        return Err(Error::InvalidArgument("all columns must have the same length".into()));
    }
    if p.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be positive and finite".into()));
    }
    if p.y.iter().chain(p.x.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in outcome or regressors".into()));
    }
    if !(p.tolerance > 0.0) {
        return Err(Error::InvalidArgument("absorb tolerance must be > 0".into()));
    }

    let mut factors = p.factors.clone();
    let intercept = factors.is_empty();
    if intercept {
        factors.push(Factor::constant(n));
    }
    if let Some(f) = factors.iter().find(|f| f.n_levels == 0) {
        return Err(Error::InvalidArgument(format!("factor `{}` has no levels", f.name)));
    }
    let k = p.x.len() + usize::from(intercept);
    if n <= k {
        return Err(Error::Degenerate(format!("{n} observations for {k} parameters")));
    }

    let ybar = stats::weighted_mean(&p.y, &p.weights);
    let tss_raw = p.y.iter().zip(&p.weights).map(|(y, w)| w * (y - ybar).powi(2)).sum();

    let mut sweeps = 0;
    let mut y = p.y.clone();
    sweeps = sweeps.max(demean_in_place(&mut y, &p.weights, &factors, p.tolerance, p.max_sweeps)?.sweeps);
    let mut x = p.x.clone();
    for col in x.iter_mut() {
        sweeps = sweeps.max(demean_in_place(col, &p.weights, &factors, p.tolerance, p.max_sweeps)?.sweeps);
    }

    let (cluster, clusters, clustered, cluster_dim) = match &p.cluster {
        Some(f) => {
            if f.len() != n {
                return Err(Error::InvalidArgument("cluster factor length mismatch".into()));
            }
            let dense = Factor::from_keys(f.name.clone(), f.codes.iter().copied());
            if dense.n_levels < 2 {
                return Err(Error::InsufficientClusters {
                    found: dense.n_levels,
                    required: 2,
                });
            }
            (dense.codes, dense.n_levels, true, f.name.clone())
        }
        None => ((0..n as u32).collect(), n, false, "observation".to_string()),
    };

    Ok(Prepared {
        y,
        x,
        w: p.weights.clone(),
        names: p.names.clone(),
        cluster,
        clusters,
        clustered,
        cluster_dim,
        n,
        k,
        absorbed: factors.iter().map(|f| f.name.clone()).collect(),
        sweeps,
        tss_raw,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub terms: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub vcov: Vec<Vec<f64>>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub df: f64,
    pub n: usize,
    pub k: usize,
    pub clusters: usize,
    pub cluster_dim: String,
    pub vcov_type: String,
    /// Weighted R² including the absorbed effects.
    pub r2: f64,
    pub within_r2: f64,
    /// Weighted mean squared residual.
    pub resid_var: f64,
    pub absorbed: Vec<String>,
    pub sweeps: usize,
}

impl RegressionFit {
    pub fn index_of(&self, term: &str) -> Result<usize> {
        self.terms
            .iter()
            .position(|t| t == term)
            .ok_or_else(|| Error::InvalidArgument(format!("no term `{term}` in fit")))
    }

    pub fn coef_of(&self, term: &str) -> Result<f64> {
        Ok(self.coef[self.index_of(term)?])
    }

    pub fn se_of(&self, term: &str) -> Result<f64> {
        Ok(self.se[self.index_of(term)?])
    }

    /// Two-sided confidence interval from the t(df) reference distribution.
    pub fn ci(&self, i: usize, level: f64) -> Result<(f64, f64)> {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let t = StudentsT::new(0.0, 1.0, self.df).map_err(|e| Error::Numerical(e.to_string()))?;
        let q = t.inverse_cdf(0.5 + level / 2.0);
        Ok((self.coef[i] - q * self.se[i], self.coef[i] + q * self.se[i]))
    }
}

pub(crate) fn gram(x: &[Vec<f64>], w: &[f64]) -> DMatrix<f64> {
    let k = x.len();
    let mut m = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v: f64 = x[a].iter().zip(&x[b]).zip(w).map(|((p, q), wi)| p * q * wi).sum();
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// (X'WX)⁻¹ with a rank check on the correlation-scaled Gram matrix.
pub(crate) fn checked_inverse(xtx: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let k = xtx.nrows();
    for i in 0..k {
        if !(xtx[(i, i)] > 1e-300) {
            return Err(Error::Collinear(format!(
                "`{}` has no variation after absorbing fixed effects",
                names[i]
            )));
        }
    }
    let d: Vec<f64> = (0..k).map(|i| xtx[(i, i)].sqrt()).collect();
    let scaled = DMatrix::from_fn(k, k, |i, j| xtx[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(scaled.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < 1e-10 {
        return Err(Error::Collinear(format!(
            "regressors {{{}}} are collinear after absorption",
            names.join(", ")
        )));
    }
    let inv = scaled
        .cholesky()
        .ok_or_else(|| Error::Collinear(names.join(", ")))?
        .inverse();
    Ok(DMatrix::from_fn(k, k, |i, j| inv[(i, j)] / (d[i] * d[j])))
}

/// Fit on a prepared design.
pub fn fit_prepared(pr: &Prepared) -> Result<RegressionFit> {
    let k = pr.x.len();
    let n = pr.n;
    let xtx = gram(&pr.x, &pr.w);
    let a = checked_inverse(&xtx, &pr.names)?;
    let xty = DVector::from_fn(k, |j, _| pr.x[j].iter().zip(&pr.y).zip(&pr.w).map(|((x, y), w)| x * y * w).sum());
    let beta = &a * xty;

    let resid: Vec<f64> = (0..n)
        .map(|i| pr.y[i] - (0..k).map(|j| pr.x[j][i] * beta[j]).sum::<f64>())
        .collect();
    let mut scores = DMatrix::<f64>::zeros(pr.clusters, k);
    for i in 0..n {
        let g = pr.cluster[i] as usize;
        let we = pr.w[i] * resid[i];
        for j in 0..k {
            scores[(g, j)] += pr.x[j][i] * we;
        }
    }
    let meat = scores.transpose() * &scores;
    let c = pr.small_sample_factor();
    let mut v = &a * meat * &a * c;
    v = (&v + v.transpose()) * 0.5;

    let ssr: f64 = resid.iter().zip(&pr.w).map(|(e, w)| w * e * e).sum();
    let tss_within: f64 = pr.y.iter().zip(&pr.w).map(|(y, w)| w * y * y).sum();
    let sw: f64 = pr.w.iter().sum();
    let df = pr.df();
    let coef: Vec<f64> = beta.iter().copied().collect();
    let se: Vec<f64> = (0..k).map(|j| v[(j, j)].max(0.0).sqrt()).collect();
    let t: Vec<f64> = coef.iter().zip(&se).map(|(b, s)| b / s).collect();
    let p = t
        .iter()
        .map(|t| stats::student_t_two_sided_p(*t, df))
        .collect::<Result<Vec<_>>>()?;
    Ok(RegressionFit {
        terms: pr.names.clone(),
        coef,
        se,
        vcov: (0..k).map(|i| (0..k).map(|j| v[(i, j)]).collect()).collect(),
        t,
        p,
        df,
        n,
        k: pr.k,
        clusters: pr.clusters,
        cluster_dim: pr.cluster_dim.clone(),
        vcov_type: if pr.clustered { "CRV1" } else { "HC1" }.into(),
        r2: if pr.tss_raw > 0.0 { 1.0 - ssr / pr.tss_raw } else { f64::NAN },
        within_r2: if tss_within > 0.0 { 1.0 - ssr / tss_within } else { f64::NAN },
        resid_var: ssr / sw,
        absorbed: pr.absorbed.clone(),
        sweeps: pr.sweeps,
    })
}

/// Weighted least squares with absorbed fixed effects and clustered errors.
pub fn wls_absorbed(p: &WlsProblem) -> Result<RegressionFit> {
    fit_prepared(&prepare(p)?)
}
