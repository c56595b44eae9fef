//! Synthetic data for Monte Carlo checks.
//!
//! Occupation cross-sections follow the proxy decomposition
//! E_p = ψΣθqτ + u = ψE + η + u with Y = βE + ρA + ε. Each occupation carries a
//! two-task bundle: a frontier task (τ = 1, q = E) and a routine task (τ = 0),
//! so the true exposure is the frontier task's time share.
//!
//! Panels follow y = α_o + γ_s + δ_t + β·(z(E_o)·Post_t) + X'θ + ε.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::{ExposureVector, Role};
use crate::ingest::{LoadOptions, OccOutcomeTable, OutcomeRow, Task, TaskMatrix};
use crate::occ::{OccId, SOC_MAJOR_GROUPS};
use crate::rng;
use crate::selection::SelectionProfile;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiDist {
    Lognormal { mu: f64, sigma: f64 },
    Constant { c: f64 },
    /// Resampled with replacement.
    Empirical { values: Vec<f64> },
}

impl PsiDist {
    /// E[ψ] under the distribution.
    pub fn mean(&self) -> f64 {
        match self {
            PsiDist::Lognormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            PsiDist::Constant { c } => *c,
            PsiDist::Empirical { values } => stats::mean(values),
        }
    }

    /// Lognormal with unit mean.
    pub fn unit_lognormal(sigma: f64) -> Self {
        PsiDist::Lognormal {
            mu: -sigma * sigma / 2.0,
            sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaMode {
    None,
    /// Exponential tilt q_p ∝ q·exp(strength·τ). Positive strength leans
    /// platform use toward high-τ tasks.
    Correlated { strength: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExposureDist {
    Uniform { a: f64, b: f64 },
    Beta { alpha: f64, beta: f64 },
}

impl ExposureDist {
    pub fn mean(&self) -> f64 {
        match self {
            ExposureDist::Uniform { a, b } => (a + b) / 2.0,
            ExposureDist::Beta { alpha, beta } => alpha / (alpha + beta),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ExposureDist::Uniform { a, b } => (b - a).powi(2) / 12.0,
            ExposureDist::Beta { alpha, beta } => {
                let s = alpha + beta;
                alpha * beta / (s * s * (s + 1.0))
            }
        }
    }
}

fn default_psi() -> PsiDist {
    PsiDist::Constant { c: 1.0 }
}

fn default_theta() -> ThetaMode {
    ThetaMode::None
}

fn default_exposure() -> ExposureDist {
    ExposureDist::Uniform { a: 0.0, b: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DGPConfig {
    pub n_occ: usize,
    pub beta: f64,
    #[serde(default)]
    pub rho_adoption: f64,
    #[serde(default = "default_psi")]
    pub psi_dist: PsiDist,
    /// Correlation between the Gaussian driver of ln ψ and standardized E.
    /// Used by the lognormal law only.
    #[serde(default)]
    pub psi_exposure_corr: f64,
    #[serde(default = "default_theta")]
    pub theta_mode: ThetaMode,
    #[serde(default)]
    pub noise_sd_u: f64,
    #[serde(default)]
    pub noise_sd_eps: f64,
    #[serde(default = "default_exposure")]
    pub exposure_dist: ExposureDist,
    #[serde(default)]
    pub seed: u64,
}

impl DGPConfig {
    pub fn new(n_occ: usize, beta: f64) -> Self {
        DGPConfig {
            n_occ,
            beta,
            rho_adoption: 0.0,
            psi_dist: default_psi(),
            psi_exposure_corr: 0.0,
            theta_mode: default_theta(),
            noise_sd_u: 0.0,
            noise_sd_eps: 0.0,
            exposure_dist: default_exposure(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_occ < 2 {
            return bad(format!("n_occ must be >= 2, got {}", self.n_occ));
        }
        for (name, v) in [("noise_sd_u", self.noise_sd_u), ("noise_sd_eps", self.noise_sd_eps)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite value >= 0"));
            }
        }
        if !self.beta.is_finite() || !self.rho_adoption.is_finite() {
            return bad("beta and rho_adoption must be finite".into());
        }
        if !(-1.0..=1.0).contains(&self.psi_exposure_corr) {
            return bad("psi_exposure_corr must lie in [-1, 1]".into());
        }
        match &self.psi_dist {
            PsiDist::Lognormal { mu, sigma } => {
                if !mu.is_finite() || !(*sigma >= 0.0) || !sigma.is_finite() {
                    return bad("lognormal psi needs finite mu and sigma >= 0".into());
                }
            }
            PsiDist::Constant { c } => {
                if !(*c > 0.0) || !c.is_finite() {
                    return bad("constant psi must be > 0".into());
                }
            }
            PsiDist::Empirical { values } => {
                if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return bad("empirical psi needs a nonempty list of positive values".into());
                }
            }
        }
        if let ThetaMode::Correlated { strength } = self.theta_mode {
            if !strength.is_finite() {
                return bad("theta strength must be finite".into());
            }
        }
        match self.exposure_dist {
            ExposureDist::Uniform { a, b } => {
                if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
                    return bad("uniform exposure needs 0 <= a <= b <= 1".into());
                }
            }
            ExposureDist::Beta { alpha, beta } => {
                if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
                    return bad("beta exposure needs alpha, beta > 0".into());
                }
            }
        }
        Ok(())
    }

    /// Additionally require Var(E) > 0 so λ and κ exist.
    pub fn validate_for_plim(&self) -> Result<()> {
        self.validate()?;
        if self.exposure_dist.variance() <= 0.0 {
            return Err(Error::Degenerate("exposure distribution has zero variance".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: DGPConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DGPConfig::from_json(&text)
    }
}

/// One occupation-level draw. Vectors are indexed by synthetic occupation.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub e: Vec<f64>,
    pub psi: Vec<f64>,
    /// Platform share of the frontier task, q_p for τ = 1.
    pub q_p: Vec<f64>,
    pub eta: Vec<f64>,
    pub u: Vec<f64>,
    pub e_p: Vec<f64>,
    pub adoption: Vec<f64>,
    pub y: Vec<f64>,
}

impl CrossSection {
    /// E_p / ψ.
    pub fn reweighted(&self) -> Vec<f64> {
        self.e_p.iter().zip(&self.psi).map(|(e, p)| e / p).collect()
    }

    /// Copy with every column except ψ and q_p demeaned.
    pub fn demeaned(&self) -> CrossSection {
        let dm = |x: &[f64]| {
            let m = stats::mean(x);
            x.iter().map(|v| v - m).collect::<Vec<_>>()
        };
        CrossSection {
            e: dm(&self.e),
            psi: self.psi.clone(),
            q_p: self.q_p.clone(),
            eta: dm(&self.eta),
            u: dm(&self.u),
            e_p: dm(&self.e_p),
            adoption: dm(&self.adoption),
            y: dm(&self.y),
        }
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    /// Domain-typed view: true exposure, proxy, selection profile, task matrix and outcomes.
    pub fn to_domain(&self) -> Result<DomainDraw> {
        let ids: Vec<OccId> = (0..self.len()).map(synthetic_occ).collect::<Result<_>>()?;
        let mut rows = Vec::with_capacity(2 * self.len());
        let mut psi = BTreeMap::new();
        let mut eta = BTreeMap::new();
        let mut theta = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            let (e, qp) = (self.e[i], self.q_p[i]);
            rows.push((id.clone(), Task { id: "frontier".into(), q: e, q_p: qp, tau: 1.0 }));
            rows.push((id.clone(), Task { id: "routine".into(), q: 1.0 - e, q_p: 1.0 - qp, tau: 0.0 }));
            psi.insert(id.clone(), self.psi[i]);
            eta.insert(id.clone(), self.eta[i]);
            let mut th = BTreeMap::new();
            if e > 0.0 {
                th.insert("frontier".to_string(), qp / e);
            }
            if e < 1.0 {
                th.insert("routine".to_string(), (1.0 - qp) / (1.0 - e));
            }
            theta.insert(id.clone(), th);
        }
        let tasks = TaskMatrix::from_rows(rows, LoadOptions { percent: false, normalize: true })?;
        let vec_of = |x: &[f64], role, label: &str| {
            ExposureVector::new(ids.iter().cloned().zip(x.iter().copied()).collect(), role, label)
        };
        let outcomes = OccOutcomeTable::from_rows(
            "y",
            ids.iter().cloned().zip(self.y.iter().map(|&value| OutcomeRow { value, weight: 1.0 })),
        )?;
        Ok(DomainDraw {
            truth: vec_of(&self.e, Role::True, "true"),
            proxy: vec_of(&self.e_p, Role::Proxy, "proxy"),
            profile: SelectionProfile { psi, theta, eta, excluded: Vec::new() },
            tasks,
            outcomes,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DomainDraw {
    pub truth: ExposureVector,
    pub proxy: ExposureVector,
    pub profile: SelectionProfile,
    pub tasks: TaskMatrix,
    pub outcomes: OccOutcomeTable,
}

/// Six-digit synthetic code for occupation index `i` (10,000 per major group).
pub fn synthetic_occ(i: usize) -> Result<OccId> {
    let group = i / 10_000;
    let (major, _) = SOC_MAJOR_GROUPS.get(group).ok_or_else(|| {
        Error::InvalidArgument(format!("synthetic occupation index {i} exceeds the code space"))
    })?;
    OccId::parse(&format!("{major}{:04}", i % 10_000))
}

fn draw_exposure(dist: &ExposureDist, rng: &mut ChaCha20Rng, n: usize) -> Result<Vec<f64>> {
    Ok(match *dist {
        ExposureDist::Uniform { a, b } => (0..n).map(|_| a + (b - a) * rng.random::<f64>()).collect(),
        ExposureDist::Beta { alpha, beta } => {
            let d = Beta::new(alpha, beta).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            (0..n).map(|_| d.sample(rng)).collect()
        }
    })
}

fn gaussian(sd: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Replicate 0 of [`gen_occ_replicate`].
pub fn gen_occ_cross_section(cfg: &DGPConfig) -> Result<CrossSection> {
    gen_occ_replicate(cfg, 0)
}

/// Draw replicate `r`, using stream `r` of the configured seed.
pub fn gen_occ_replicate(cfg: &DGPConfig, r: u64) -> Result<CrossSection> {
    cfg.validate()?;
    let n = cfg.n_occ;
    let mut rng = rng::stream(cfg.seed, r);
    let e = draw_exposure(&cfg.exposure_dist, &mut rng, n)?;

    let psi: Vec<f64> = match &cfg.psi_dist {
        PsiDist::Constant { c } => vec![*c; n],
        PsiDist::Empirical { values } => (0..n).map(|_| values[rng.random_range(0..values.len())]).collect(),
        PsiDist::Lognormal { mu, sigma } => {
            let (m, sd) = (cfg.exposure_dist.mean(), cfg.exposure_dist.variance().sqrt());
            let c = cfg.psi_exposure_corr;
            let resid = (1.0 - c * c).max(0.0).sqrt();
            e.iter()
                .map(|&x| {
                    let z = if sd > 0.0 { (x - m) / sd } else { 0.0 };
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    (mu + sigma * (c * z + resid * xi)).exp()
                })
                .collect()
        }
    };

    let q_p: Vec<f64> = match cfg.theta_mode {
        ThetaMode::None => e.clone(),
        ThetaMode::Correlated { strength } => {
            let k = strength.exp();
            e.iter().map(|&x| x * k / (x * k + 1.0 - x)).collect()
        }
    };
    let eta: Vec<f64> = (0..n).map(|i| psi[i] * (q_p[i] - e[i])).collect();

    let nu = gaussian(cfg.noise_sd_u)?;
    let u: Vec<f64> = (0..n).map(|_| if cfg.noise_sd_u > 0.0 { nu.sample(&mut rng) } else { 0.0 }).collect();
    let e_p: Vec<f64> = (0..n).map(|i| psi[i] * q_p[i] + u[i]).collect();

    let psi_mean = cfg.psi_dist.mean();
    let adoption: Vec<f64> = psi.iter().map(|p| p - psi_mean).collect();
    let neps = gaussian(cfg.noise_sd_eps)?;
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eps = if cfg.noise_sd_eps > 0.0 { neps.sample(&mut rng) } else { 0.0 };
            cfg.beta * e[i] + cfg.rho_adoption * adoption[i] + eps
        })
        .collect();

    Ok(CrossSection { e, psi, q_p, eta, u, e_p, adoption, y })
}

/// Panel layout and nuisance parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSpec {
    pub first_year: i32,
    pub last_year: i32,
    pub n_states: usize,
    pub persons_per_occ_year: usize,
    pub post_years: BTreeSet<i32>,
    /// SD of the occupation, state and year effects. Zero disables them.
    #[serde(default = "one")]
    pub fe_sd: f64,
    #[serde(default)]
    pub n_controls: usize,
    /// Bernoulli outcome with the linear index as its probability (clamped to [0,1]).
    #[serde(default)]
    pub binary: bool,
    /// Effect applies only in these years when set; otherwise in `post_years`.
    #[serde(default)]
    pub effect_years: Option<BTreeSet<i32>>,
    /// Draw person weights from U(0.5, 1.5) instead of using 1.
    #[serde(default = "yes")]
    pub random_weights: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl PanelSpec {
    pub fn new(first_year: i32, last_year: i32, n_states: usize, persons_per_occ_year: usize, post_years: impl IntoIterator<Item = i32>) -> Self {
        PanelSpec {
            first_year,
            last_year,
            n_states,
            persons_per_occ_year,
            post_years: post_years.into_iter().collect(),
            fe_sd: 1.0,
            n_controls: 0,
            binary: false,
            effect_years: None,
            random_weights: true,
        }
    }

    pub fn years(&self) -> std::ops::RangeInclusive<i32> {
        self.first_year..=self.last_year
    }

    fn validate(&self) -> Result<()> {
        if self.first_year > self.last_year {
            return Err(Error::InvalidArgument("empty year range".into()));
        }
        if self.n_states == 0 {
            return Err(Error::InvalidArgument("n_states must be >= 1".into()));
        }
        if self.persons_per_occ_year == 0 {
            return Err(Error::Degenerate("every occupation-year cell would be empty".into()));
        }
        if self.post_years.is_empty() {
            return Err(Error::InvalidArgument("post_years must be nonempty".into()));
        }
        let years = self.years();
        if self.post_years.iter().any(|y| !years.contains(y)) {
            return Err(Error::InvalidArgument("post_years must lie inside the year range".into()));
        }
        if !(self.fe_sd >= 0.0) {
            return Err(Error::InvalidArgument("fe_sd must be >= 0".into()));
        }
        Ok(())
    }
}

/// Person-year records in column form.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub occupations: Vec<OccId>,
    pub states: Vec<String>,
    pub person_id: Vec<u64>,
    /// Index into `occupations`.
    pub occ: Vec<u32>,
    /// Index into `states`.
    pub state: Vec<u32>,
    pub year: Vec<i32>,
    pub outcome: Vec<f64>,
    pub weight: Vec<f64>,
    pub control_names: Vec<String>,
    /// One column per control.
    pub controls: Vec<Vec<f64>>,
    pub post_years: BTreeSet<i32>,
    /// Exposure the treatment was built from (standardized true exposure for synthetic panels).
    pub exposure: Option<ExposureVector>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: BTreeMap<i32, f64>,
}

impl PanelDataset {
    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn years(&self) -> BTreeSet<i32> {
        self.year.iter().copied().collect()
    }

    /// Keep only records whose occupation is in `keep`.
    pub fn restrict_to(&self, keep: &BTreeSet<OccId>) -> PanelDataset {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep.contains(self.occ_of(i))).collect();
        let pick = |v: &Vec<f64>| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        PanelDataset {
            occupations: self.occupations.clone(),
            states: self.states.clone(),
            person_id: rows.iter().map(|&i| self.person_id[i]).collect(),
            occ: rows.iter().map(|&i| self.occ[i]).collect(),
            state: rows.iter().map(|&i| self.state[i]).collect(),
            year: rows.iter().map(|&i| self.year[i]).collect(),
            outcome: pick(&self.outcome),
            weight: pick(&self.weight),
            control_names: self.control_names.clone(),
            controls: self.controls.iter().map(pick).collect(),
            post_years: self.post_years.clone(),
            exposure: self.exposure.clone(),
            alpha: self.alpha.clone(),
            gamma: self.gamma.clone(),
            delta: self.delta.clone(),
        }
    }

    /// Occupations that appear in at least one record.
    pub fn present_occupations(&self) -> BTreeSet<OccId> {
        let seen: BTreeSet<u32> = self.occ.iter().copied().collect();
        seen.into_iter().map(|o| self.occupations[o as usize].clone()).collect()
    }

    /// Occupation code of record `i`.
    pub fn occ_of(&self, i: usize) -> &OccId {
        &self.occupations[self.occ[i] as usize]
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("person_id,occ_code,state,year,outcome,weight");
        for c in &self.control_names {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                self.person_id[i],
                self.occ_of(i),
                self.states[self.state[i] as usize],
                self.year[i],
                self.outcome[i],
                self.weight[i]
            ));
            for c in &self.controls {
                out.push_str(&format!(",{}", c[i]));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv_string().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Read a panel. `post_years` is attached because the file does not carry it.
    pub fn from_csv_reader<R: Read>(reader: R, post_years: BTreeSet<i32>) -> Result<Self> {
        const CTX: &str = "panel";
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let fixed = ["person_id", "occ_code", "state", "year", "outcome", "weight"];
        if header.len() < fixed.len() || header[..fixed.len()] != fixed {
            return Err(Error::schema(CTX, "expected header `person_id,occ_code,state,year,outcome,weight[,controls]`"));
        }
        let control_names: Vec<String> = header[fixed.len()..].to_vec();
        let mut occ_index: BTreeMap<OccId, u32> = BTreeMap::new();
        let mut state_index: BTreeMap<String, u32> = BTreeMap::new();
        let mut p = PanelDataset {
            occupations: Vec::new(),
            states: Vec::new(),
            person_id: Vec::new(),
            occ: Vec::new(),
            state: Vec::new(),
            year: Vec::new(),
            outcome: Vec::new(),
            weight: Vec::new(),
            controls: vec![Vec::new(); control_names.len()],
            control_names,
            post_years,
            exposure: None,
            alpha: Vec::new(),
            gamma: Vec::new(),
            delta: BTreeMap::new(),
        };
        let num = |s: &str, what: &str, line: usize| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::schema(CTX, format!("line {line}: bad {what} `{s}`")))
        };
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let pid: u64 = record[0]
                .parse()
                .map_err(|_| Error::schema(CTX, format!("line {line}: bad person_id")))?;
            let occ = OccId::parse(&record[1])?;
            let next = occ_index.len() as u32;
            let oi = *occ_index.entry(occ.clone()).or_insert_with(|| {
                p.occupations.push(occ);
                next
            });
            let next = state_index.len() as u32;
            let si = *state_index.entry(record[2].to_string()).or_insert_with(|| {
                p.states.push(record[2].to_string());
                next
            });
            let year: i32 = record[3]
                .parse()
                .map_err(|_| Error::schema(CTX, format!("line {line}: bad year")))?;
            let w = num(&record[5], "weight", line)?;
            if w <= 0.0 {
                return Err(Error::Negative { what: "weight", code: format!("line {line}"), value: w });
            }
            p.person_id.push(pid);
            p.occ.push(oi);
            p.state.push(si);
            p.year.push(year);
            p.outcome.push(num(&record[4], "outcome", line)?);
            p.weight.push(w);
            for (j, c) in p.controls.iter_mut().enumerate() {
                c.push(num(&record[6 + j], "control", line)?);
            }
        }
        if p.is_empty() {
            return Err(Error::schema(CTX, "no records"));
        }
        let years = p.years();
        let (lo, hi) = (*years.first().unwrap(), *years.last().unwrap());
        if years.len() as i64 != (hi - lo + 1) as i64 {
            return Err(Error::schema(CTX, "years do not form a contiguous range"));
        }
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>, post_years: BTreeSet<i32>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        PanelDataset::from_csv_reader(f, post_years)
    }
}

/// Replicate 0 of [`gen_panel_replicate`].
pub fn gen_panel(cfg: &DGPConfig, spec: &PanelSpec) -> Result<PanelDataset> {
    gen_panel_replicate(cfg, spec, 0)
}

/// Panel replicate `r`. Uses `cfg.n_occ`, `cfg.beta` (per SD of exposure),
/// `cfg.exposure_dist` and `cfg.noise_sd_eps`; selection fields are ignored.
pub fn gen_panel_replicate(cfg: &DGPConfig, spec: &PanelSpec, r: u64) -> Result<PanelDataset> {
    cfg.validate()?;
    spec.validate()?;
    // panel streams sit above the cross-section streams
    let mut rng = rng::stream(cfg.seed, (1u64 << 32) + r);
    let e = draw_exposure(&cfg.exposure_dist, &mut rng, cfg.n_occ)?;
    panel_from(cfg, spec, rng, &e, None)
}

/// Panel replicate `r` built on a given true exposure (one value per synthetic
/// occupation). With `adoption`, treated years also carry ρ·A_o, ρ = `cfg.rho_adoption`.
pub fn gen_panel_for(cfg: &DGPConfig, spec: &PanelSpec, r: u64, e: &[f64], adoption: Option<&[f64]>) -> Result<PanelDataset> {
    cfg.validate()?;
    spec.validate()?;
    if e.len() != cfg.n_occ || adoption.is_some_and(|a| a.len() != cfg.n_occ) {
        return Err(Error::InvalidArgument("exposure and adoption need one value per occupation".into()));
    }
    let rng = rng::stream(cfg.seed, (1u64 << 32) + r);
    panel_from(cfg, spec, rng, e, adoption)
}

fn panel_from(cfg: &DGPConfig, spec: &PanelSpec, mut rng: ChaCha20Rng, e: &[f64], adoption: Option<&[f64]>) -> Result<PanelDataset> {
    let n_occ = cfg.n_occ;
    let occupations: Vec<OccId> = (0..n_occ).map(synthetic_occ).collect::<Result<_>>()?;
    let (m, sd) = (stats::mean(e), stats::variance(e).sqrt());
    let z: Vec<f64> = if sd > 0.0 { e.iter().map(|x| (x - m) / sd).collect() } else { vec![0.0; n_occ] };

    let fe = gaussian(spec.fe_sd)?;
    let fe_draw = |rng: &mut ChaCha20Rng| if spec.fe_sd > 0.0 { fe.sample(rng) } else { 0.0 };
    let alpha: Vec<f64> = (0..n_occ).map(|_| fe_draw(&mut rng)).collect();
    let gamma: Vec<f64> = (0..spec.n_states).map(|_| fe_draw(&mut rng)).collect();
    let delta: BTreeMap<i32, f64> = spec.years().map(|y| (y, fe_draw(&mut rng))).collect();
    let theta_x: Vec<f64> = (0..spec.n_controls).map(|j| 0.1 * (j as f64 + 1.0)).collect();

    let eps = gaussian(cfg.noise_sd_eps)?;
    let effect_years = spec.effect_years.as_ref().unwrap_or(&spec.post_years);
    let n_years = (spec.last_year - spec.first_year + 1) as usize;
    let cap = n_occ * n_years * spec.persons_per_occ_year;
    let mut p = PanelDataset {
        occupations,
        states: (1..=spec.n_states).map(|s| format!("{s:02}")).collect(),
        person_id: Vec::with_capacity(cap),
        occ: Vec::with_capacity(cap),
        state: Vec::with_capacity(cap),
        year: Vec::with_capacity(cap),
        outcome: Vec::with_capacity(cap),
        weight: Vec::with_capacity(cap),
        control_names: (1..=spec.n_controls).map(|j| format!("x{j}")).collect(),
        controls: vec![Vec::with_capacity(cap); spec.n_controls],
        post_years: spec.post_years.clone(),
        exposure: None,
        alpha,
        gamma,
        delta,
    };
    let mut pid = 0u64;
    for year in spec.years() {
        let treated = effect_years.contains(&year);
        for o in 0..n_occ {
            for _ in 0..spec.persons_per_occ_year {
                let s = rng.random_range(0..spec.n_states);
                let mut index = p.alpha[o] + p.gamma[s] + p.delta[&year];
                if treated {
                    index += cfg.beta * z[o];
                    if let Some(a) = adoption {
                        index += cfg.rho_adoption * a[o];
                    }
                }
                for (j, col) in p.controls.iter_mut().enumerate() {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    col.push(x);
                    index += theta_x[j] * x;
                }
                let noise = if cfg.noise_sd_eps > 0.0 { eps.sample(&mut rng) } else { 0.0 };
                let y = if spec.binary {
                    let prob = (index + noise).clamp(0.0, 1.0);
                    if rng.random::<f64>() < prob { 1.0 } else { 0.0 }
                } else {
                    index + noise
                };
                let w = if spec.random_weights { 0.5 + rng.random::<f64>() } else { 1.0 };
                p.person_id.push(pid);
                p.occ.push(o as u32);
                p.state.push(s as u32);
                p.year.push(year);
                p.outcome.push(y);
                p.weight.push(w);
                pid += 1;
            }
        }
    }
    p.exposure = Some(ExposureVector::new(
        p.occupations.iter().cloned().zip(z).collect(),
        Role::Standardized,
        "true",
    ));
    Ok(p)
}
