//! Difference-in-differences and event-study designs on person-year panels.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::absorb::{Factor, DEFAULT_MAX_SWEEPS, DEFAULT_TOLERANCE};
use super::wls::{wls_absorbed, RegressionFit, WlsProblem};
use crate::dgp::PanelDataset;
use crate::error::{Error, Result};
use crate::exposure::{ExposureVector, Role};
use crate::stats;

pub const DID_TERM: &str = "exposure_x_post";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeVar {
    Occ,
    State,
    Year,
}

impl FeVar {
    fn as_str(self) -> &'static str {
        match self {
            FeVar::Occ => "occ",
            FeVar::State => "state",
            FeVar::Year => "year",
        }
    }
}

impl FromStr for FeVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "occ" | "occupation" => Ok(FeVar::Occ),
            "state" => Ok(FeVar::State),
            "year" => Ok(FeVar::Year),
            other => Err(Error::InvalidArgument(format!("unknown factor `{other}`"))),
        }
    }
}

/// One absorbed dimension: a single factor or an interaction such as state×year.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeDim(pub Vec<FeVar>);

impl FeDim {
    pub fn factor(&self, panel: &PanelDataset) -> Factor {
        let name = self.to_string();
        let key = |i: usize| -> Vec<i64> {
            self.0
                .iter()
                .map(|v| match v {
                    FeVar::Occ => panel.occ[i] as i64,
                    FeVar::State => panel.state[i] as i64,
                    FeVar::Year => panel.year[i] as i64,
                })
                .collect()
        };
        Factor::from_keys(name, (0..panel.len()).map(key))
    }
}

impl fmt::Display for FeDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.0.iter().map(|v| v.as_str()).collect();
        f.write_str(&parts.join("*"))
    }
}

impl FromStr for FeDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vars = s.split('*').map(FeVar::from_str).collect::<Result<Vec<_>>>()?;
        if vars.is_empty() {
            return Err(Error::InvalidArgument("empty fixed-effect dimension".into()));
        }
        Ok(FeDim(vars))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffectSpec {
    pub dimensions: Vec<FeDim>,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl FixedEffectSpec {
    pub fn new(dimensions: Vec<FeDim>) -> Self {
        FixedEffectSpec {
            dimensions,
            tolerance: DEFAULT_TOLERANCE,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }

    /// Occupation, state and year effects.
    pub fn standard() -> Self {
        FixedEffectSpec::new(vec![FeDim(vec![FeVar::Occ]), FeDim(vec![FeVar::State]), FeDim(vec![FeVar::Year])])
    }

    /// Parse a comma list such as `occ,state,year` or `occ,state*year`. Empty means none.
    pub fn parse(s: &str) -> Result<Self> {
        let dims = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty() && *p != "none")
            .map(FeDim::from_str)
            .collect::<Result<Vec<_>>>()?;
        Ok(FixedEffectSpec::new(dims))
    }

    pub fn factors(&self, panel: &PanelDataset) -> Vec<Factor> {
        self.dimensions.iter().map(|d| d.factor(panel)).collect()
    }
}

impl fmt::Display for FixedEffectSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dimensions.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Cluster dimension; `None` gives heteroskedasticity-robust errors.
pub fn parse_cluster(s: &str) -> Result<Option<FeDim>> {
    match s.trim() {
        "" | "none" => Ok(None),
        other => Ok(Some(other.parse()?)),
    }
}

fn exposure_per_record(panel: &PanelDataset, exposure: &ExposureVector) -> Result<Vec<f64>> {
    if exposure.role != Role::Standardized {
        return Err(Error::InvalidArgument(format!(
            "exposure must be standardized, got role `{}`",
            exposure.role
        )));
    }
    let by_occ: Vec<Option<f64>> = panel.occupations.iter().map(|o| exposure.get(o)).collect();
    panel
        .occ
        .iter()
        .map(|&o| {
            by_occ[o as usize].ok_or_else(|| Error::Missing {
                what: "exposure",
                code: panel.occupations[o as usize].to_string(),
            })
        })
        .collect()
}

fn with_controls(panel: &PanelDataset, mut x: Vec<Vec<f64>>, mut names: Vec<String>) -> (Vec<Vec<f64>>, Vec<String>) {
    x.extend(panel.controls.iter().cloned());
    names.extend(panel.control_names.iter().cloned());
    (x, names)
}

fn problem(
    panel: &PanelDataset,
    x: Vec<Vec<f64>>,
    names: Vec<String>,
    fe: &FixedEffectSpec,
    cluster: Option<&FeDim>,
) -> WlsProblem {
    let (x, names) = with_controls(panel, x, names);
    let mut p = WlsProblem::new(panel.outcome.clone(), x, names, panel.weight.clone())
        .absorb(fe.factors(panel))
        .cluster(cluster.map(|c| c.factor(panel)));
    p.tolerance = fe.tolerance;
    p.max_sweeps = fe.max_sweeps;
    p
}

/// The DiD regression y = FE + β·(E × Post) + X'θ + ε as a least-squares problem.
pub fn did_problem(
    panel: &PanelDataset,
    exposure: &ExposureVector,
    post_years: &BTreeSet<i32>,
    fe: &FixedEffectSpec,
    cluster: Option<&FeDim>,
) -> Result<WlsProblem> {
    if post_years.is_empty() {
        return Err(Error::InvalidArgument("post_years must be nonempty".into()));
    }
    let e = exposure_per_record(panel, exposure)?;
    let x: Vec<f64> = e
        .iter()
        .zip(&panel.year)
        .map(|(e, y)| if post_years.contains(y) { *e } else { 0.0 })
        .collect();
    Ok(problem(panel, vec![x], vec![DID_TERM.to_string()], fe, cluster))
}

pub fn did(
    panel: &PanelDataset,
    exposure: &ExposureVector,
    post_years: &BTreeSet<i32>,
    fe: &FixedEffectSpec,
    cluster: Option<&FeDim>,
) -> Result<RegressionFit> {
    wls_absorbed(&did_problem(panel, exposure, post_years, fe, cluster)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStudyFit {
    pub ref_year: i32,
    pub years: Vec<i32>,
    /// Per-year coefficient; the reference year is exactly 0.
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub pre_years: Vec<i32>,
    pub pre_f: f64,
    pub pre_df1: usize,
    pub pre_df2: usize,
    pub pre_p: f64,
    pub fit: RegressionFit,
}

impl EventStudyFit {
    pub fn coef_for(&self, year: i32) -> Option<f64> {
        self.years.iter().position(|y| *y == year).map(|i| self.coef[i])
    }
}

pub fn event_term(year: i32) -> String {
    format!("exposure_x_{year}")
}

pub fn event_study(
    panel: &PanelDataset,
    exposure: &ExposureVector,
    ref_year: i32,
    fe: &FixedEffectSpec,
    cluster: Option<&FeDim>,
) -> Result<EventStudyFit> {
    let years: Vec<i32> = panel.years().into_iter().collect();
    if !years.contains(&ref_year) {
        return Err(Error::InvalidArgument(format!("reference year {ref_year} is not in the panel")));
    }
    let pre_years: Vec<i32> = years.iter().copied().filter(|y| *y < ref_year).collect();
    if pre_years.is_empty() {
        return Err(Error::InvalidArgument(format!("no pre-period before reference year {ref_year}")));
    }
    let e = exposure_per_record(panel, exposure)?;
    let mut x = Vec::new();
    let mut names = Vec::new();
    for &yr in years.iter().filter(|y| **y != ref_year) {
        x.push(e.iter().zip(&panel.year).map(|(e, y)| if *y == yr { *e } else { 0.0 }).collect());
        names.push(event_term(yr));
    }
    let fit = wls_absorbed(&problem(panel, x, names, fe, cluster))?;

    let mut coef = Vec::with_capacity(years.len());
    let mut se = Vec::with_capacity(years.len());
    for &yr in &years {
        if yr == ref_year {
            coef.push(0.0);
            se.push(0.0);
        } else {
            let i = fit.index_of(&event_term(yr))?;
            coef.push(fit.coef[i]);
            se.push(fit.se[i]);
        }
    }

    let idx: Vec<usize> = pre_years
        .iter()
        .map(|y| fit.index_of(&event_term(*y)))
        .collect::<Result<_>>()?;
    let q = idx.len();
    let b = DVector::from_fn(q, |i, _| fit.coef[idx[i]]);
    let v = DMatrix::from_fn(q, q, |i, j| fit.vcov[idx[i]][idx[j]]);
    let vinv = v
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| v.try_inverse())
        .ok_or_else(|| Error::Numerical("pre-period covariance block is singular".into()))?;
    let wald = (b.transpose() * vinv * &b)[(0, 0)];
    let df2 = fit.clusters.saturating_sub(1).max(1);
    let pre_f = wald / q as f64;
    let pre_p = stats::f_sf(pre_f, q as f64, df2 as f64)?;

    Ok(EventStudyFit {
        ref_year,
        years,
        coef,
        se,
        pre_years,
        pre_f,
        pre_df1: q,
        pre_df2: df2,
        pre_p,
        fit,
    })
}
