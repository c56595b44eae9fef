//! Exposure vectors: true exposure, platform proxies, the composite recipe,
//! workforce reweighting, z-scoring, and cross-platform aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{OccOutcomeTable, ShareTable, TaskMatrix};
use crate::occ::OccId;
use crate::rng;
use crate::selection::{compute_psi, compute_theta, Flag, SelectionProfile};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    True,
    Proxy,
    Reweighted,
    Standardized,
    Composite,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::True => "true",
            Role::Proxy => "proxy",
            Role::Reweighted => "reweighted",
            Role::Standardized => "standardized",
            Role::Composite => "composite",
        }
    }

    pub fn parse(s: &str) -> Result<Role> {
        Ok(match s {
            "true" => Role::True,
            "proxy" => Role::Proxy,
            "reweighted" => Role::Reweighted,
            "standardized" => Role::Standardized,
            "composite" => Role::Composite,
            other => return Err(Error::schema("exposure vector", format!("unknown role `{other}`"))),
        })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureVector {
    pub values: BTreeMap<OccId, f64>,
    pub role: Role,
    pub source_label: String,
    pub wave_label: Option<String>,
}

impl ExposureVector {
    pub fn new(values: BTreeMap<OccId, f64>, role: Role, source_label: impl Into<String>) -> Self {
        ExposureVector {
            values,
            role,
            source_label: source_label.into(),
            wave_label: None,
        }
    }

    pub fn get(&self, occ: &OccId) -> Option<f64> {
        self.values.get(occ).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_wave(mut self, wave: impl Into<String>) -> Self {
        self.wave_label = Some(wave.into());
        self
    }

    /// Drop occupations whose ψ is zero or undefined in `profile`.
    pub fn restrict_to_positive_psi(&self, profile: &SelectionProfile) -> ExposureVector {
        let mut out = self.clone();
        out.values.retain(|k, _| profile.psi(k).is_some_and(|p| p > 0.0));
        out
    }

    pub fn map_values(&self, role: Role, f: impl Fn(f64) -> f64) -> ExposureVector {
        ExposureVector {
            values: self.values.iter().map(|(k, v)| (k.clone(), f(*v))).collect(),
            role,
            source_label: self.source_label.clone(),
            wave_label: self.wave_label.clone(),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("occ_code,value,role\n");
        for (k, v) in &self.values {
            out.push_str(&format!("{k},{v},{}\n", self.role));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv_string().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv_reader<R: Read>(reader: R, source_label: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["occ_code", "value", "role"] {
            return Err(Error::schema(source_label, "expected header `occ_code,value,role`"));
        }
        let mut values = BTreeMap::new();
        let mut role = None;
        for record in rdr.records() {
            let record = record?;
            let occ = OccId::parse(&record[0])?;
            let v: f64 = record[1]
                .parse()
                .map_err(|_| Error::schema(source_label, format!("bad value `{}`", &record[1])))?;
            let r = Role::parse(&record[2])?;
            if *role.get_or_insert(r) != r {
                return Err(Error::schema(source_label, "mixed roles in one exposure file"));
            }
            if values.insert(occ.clone(), v).is_some() {
                return Err(Error::Duplicate(occ.to_string()));
            }
        }
        let role = role.ok_or_else(|| Error::schema(source_label, "no rows"))?;
        Ok(ExposureVector::new(values, role, source_label))
    }

    pub fn load(path: impl AsRef<Path>, source_label: &str) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        ExposureVector::from_csv_reader(f, source_label)
    }
}

/// E_o = Σ_k q_{o,k} τ_k.
pub fn true_exposure(tasks: &TaskMatrix) -> Result<ExposureVector> {
    let mut values = BTreeMap::new();
    for (occ, list) in tasks.occupations() {
        if list.is_empty() {
            return Err(Error::Missing {
                what: "task rows",
                code: occ.to_string(),
            });
        }
        values.insert(occ.clone(), list.iter().map(|t| t.q * t.tau).sum());
    }
    Ok(ExposureVector::new(values, Role::True, "true"))
}

/// Classical noise u_o for the sorted occupation list, reproducible from the seed.
pub fn proxy_noise<'a>(occs: impl Iterator<Item = &'a OccId>, noise_sd: f64, seed: u64) -> Result<BTreeMap<OccId, f64>> {
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::InvalidArgument(format!("noise sd {noise_sd} must be >= 0")));
    }
    let mut sorted: Vec<&OccId> = occs.collect();
    sorted.sort();
    let mut rng = rng::stream(seed, 0);
    let normal = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(sorted
        .into_iter()
        .map(|k| (k.clone(), if noise_sd == 0.0 { 0.0 } else { normal.sample(&mut rng) }))
        .collect())
}

/// E_{o,p} = ψ_o Σ_k θ_{o,k} q_{o,k} τ_k + u_o, with u ~ N(0, noise_sd²).
///
/// Occupations with ψ = 0 stay in the vector (their signal is zero);
/// occupations flagged `zero_workforce` are skipped.
pub fn platform_proxy(
    tasks: &TaskMatrix,
    profile: &SelectionProfile,
    noise_sd: f64,
    seed: u64,
) -> Result<ExposureVector> {
    let mut signal = BTreeMap::new();
    for (occ, list) in tasks.occupations() {
        let psi = match profile.psi(occ) {
            Some(p) => p,
            None if profile.flag_for(occ) == Some(Flag::ZeroWorkforce) => continue,
            None => {
                return Err(Error::Missing {
                    what: "psi",
                    code: occ.to_string(),
                })
            }
        };
        let theta = profile.theta.get(occ).ok_or_else(|| Error::Missing {
            what: "theta",
            code: occ.to_string(),
        })?;
        let mut acc = 0.0;
        for t in list.iter().filter(|t| t.q > 0.0) {
            let th = theta.get(&t.id).ok_or_else(|| Error::Missing {
                what: "theta",
                code: format!("{occ}/{}", t.id),
            })?;
            acc += th * t.q * t.tau;
        }
        signal.insert(occ.clone(), psi * acc);
    }
    let noise = proxy_noise(signal.keys(), noise_sd, seed)?;
    let values = signal.into_iter().map(|(k, s)| {
        let u = noise[&k];
        (k, s + u)
    });
    Ok(ExposureVector::new(values.collect(), Role::Proxy, "proxy"))
}

fn composite_impl(
    tasks: &TaskMatrix,
    conversation_density: &ShareTable,
    workforce: &ShareTable,
    per_task: bool,
) -> Result<ExposureVector> {
    let level = tasks.level()?;
    if level != conversation_density.level() || level != workforce.level() {
        return Err(Error::LevelMismatch(
            "task matrix, conversation density and workforce must share a level".into(),
        ));
    }
    let profile = compute_psi(conversation_density, workforce)?;
    let mut values = BTreeMap::new();
    for (occ, list) in tasks.occupations() {
        let psi = profile.psi(occ).ok_or_else(|| Error::Missing {
            what: "psi",
            code: occ.to_string(),
        })?;
        let mut v = psi * list.iter().map(|t| t.q_p * t.tau).sum::<f64>();
        if per_task {
            v /= list.iter().filter(|t| t.q > 0.0).count().max(1) as f64;
        }
        values.insert(occ.clone(), v);
    }
    Ok(ExposureVector::new(
        values,
        Role::Composite,
        conversation_density.source_label(),
    ))
}

/// ψ_o Σ_k q_{o,k,p} τ_k, with ψ from the conversation density and workforce shares.
pub fn composite(tasks: &TaskMatrix, conversation_density: &ShareTable, workforce: &ShareTable) -> Result<ExposureVector> {
    composite_impl(tasks, conversation_density, workforce, false)
}

/// [`composite`] divided by the occupation's number of tasks with workforce time.
pub fn composite_per_task(
    tasks: &TaskMatrix,
    conversation_density: &ShareTable,
    workforce: &ShareTable,
) -> Result<ExposureVector> {
    composite_impl(tasks, conversation_density, workforce, true)
}

/// Ẽ_o = E_{o,p} / ψ_o. Refuses occupations with ψ = 0.
pub fn reweight(proxy: &ExposureVector, profile: &SelectionProfile) -> Result<ExposureVector> {
    let mut zero = Vec::new();
    let mut values = BTreeMap::new();
    for (occ, v) in &proxy.values {
        let psi = profile.psi(occ).ok_or_else(|| Error::Missing {
            what: "psi",
            code: occ.to_string(),
        })?;
        if psi <= 0.0 {
            zero.push(occ.to_string());
            continue;
        }
        values.insert(occ.clone(), v / psi);
    }
    if !zero.is_empty() {
        return Err(Error::ZeroPlatform(zero));
    }
    Ok(ExposureVector {
        values,
        role: Role::Reweighted,
        source_label: proxy.source_label.clone(),
        wave_label: proxy.wave_label.clone(),
    })
}

/// Weighted z-score with population SD; weights are frequency weights.
pub fn standardize(v: &ExposureVector, weights: &OccOutcomeTable) -> Result<ExposureVector> {
    let w: Vec<f64> = v
        .values
        .keys()
        .map(|k| {
            weights.weight(k).ok_or_else(|| Error::Missing {
                what: "weight",
                code: k.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    standardize_with_weights(v, &w)
}

/// [`standardize`] with weights from a map, e.g. workforce shares.
pub fn standardize_with(v: &ExposureVector, weights: &BTreeMap<OccId, f64>) -> Result<ExposureVector> {
    let w: Vec<f64> = v
        .values
        .keys()
        .map(|k| {
            weights.get(k).copied().ok_or_else(|| Error::Missing {
                what: "weight",
                code: k.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    standardize_with_weights(v, &w)
}

/// [`standardize`] with equal weights.
pub fn standardize_unweighted(v: &ExposureVector) -> Result<ExposureVector> {
    standardize_with_weights(v, &vec![1.0; v.len()])
}

fn standardize_with_weights(v: &ExposureVector, w: &[f64]) -> Result<ExposureVector> {
    let x: Vec<f64> = v.values.values().copied().collect();
    if x.is_empty() {
        return Err(Error::Degenerate("empty exposure vector".into()));
    }
    let m = stats::weighted_mean(&x, w);
    let sd = stats::weighted_variance(&x, w).sqrt();
    let scale = x.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
    if !(sd > 1e-14 * scale) {
        return Err(Error::Degenerate(format!(
            "exposure `{}` is constant; cannot standardize",
            v.source_label
        )));
    }
    Ok(v.map_values(Role::Standardized, |a| (a - m) / sd))
}

/// Platform weights for an aggregate proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationSpec {
    pub weights: BTreeMap<String, f64>,
}

impl AggregationSpec {
    pub fn new(weights: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let weights: BTreeMap<String, f64> = weights.into_iter().collect();
        if weights.values().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("platform weights must be >= 0".into()));
        }
        let sum: f64 = weights.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("platform weights sum to {sum}, expected 1")));
        }
        Ok(AggregationSpec { weights })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub vector: ExposureVector,
    pub psi_w: BTreeMap<OccId, f64>,
    /// Present when every profile carries η.
    pub eta_w: Option<BTreeMap<OccId, f64>>,
    /// Var(Δ^w) computed from the aggregated Δ directly.
    pub var_delta_w: f64,
    /// Var(Δ^w) from the weighted sum of platform variances and covariances.
    pub var_delta_w_bilinear: f64,
    /// Per-platform Var(Δ_p), in input order.
    pub var_delta: Vec<f64>,
}

/// Ē_o = Σ_p w_p E_{o,p} on the common occupation support, with ψ^w, η^w and Var(Δ^w).
pub fn aggregate(proxies: &[ExposureVector], profiles: &[SelectionProfile], spec: &AggregationSpec) -> Result<Aggregate> {
    if proxies.is_empty() || proxies.len() != profiles.len() {
        return Err(Error::InvalidArgument(
            "aggregate needs one selection profile per proxy".into(),
        ));
    }
    let w: Vec<f64> = proxies
        .iter()
        .map(|p| {
            spec.weights.get(&p.source_label).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("no aggregation weight for platform `{}`", p.source_label))
            })
        })
        .collect::<Result<_>>()?;
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("platform weights sum to {sum}, expected 1")));
    }
    let support: Vec<OccId> = proxies[0]
        .values
        .keys()
        .filter(|k| {
            proxies.iter().all(|p| p.values.contains_key(*k)) && profiles.iter().all(|pr| pr.psi(k).is_some())
        })
        .cloned()
        .collect();
    if support.len() < 2 {
        return Err(Error::DisjointSupport("the aggregated platforms".into()));
    }

    let mut values = BTreeMap::new();
    let mut psi_w = BTreeMap::new();
    let has_eta = profiles.iter().all(|pr| support.iter().all(|k| pr.eta(k).is_some()));
    let mut eta_w = BTreeMap::new();
    for k in &support {
        values.insert(k.clone(), proxies.iter().zip(&w).map(|(p, wp)| wp * p.values[k]).sum());
        psi_w.insert(k.clone(), profiles.iter().zip(&w).map(|(pr, wp)| wp * pr.psi(k).unwrap()).sum());
        if has_eta {
            eta_w.insert(k.clone(), profiles.iter().zip(&w).map(|(pr, wp)| wp * pr.eta(k).unwrap()).sum());
        }
    }

    let deltas: Vec<Vec<f64>> = profiles
        .iter()
        .map(|pr| support.iter().map(|k| pr.psi(k).unwrap() - 1.0).collect())
        .collect();
    let delta_w: Vec<f64> = support.iter().map(|k| psi_w[k] - 1.0).collect();
    let var_delta_w = stats::variance(&delta_w);
    let var_delta: Vec<f64> = deltas.iter().map(|d| stats::variance(d)).collect();
    let mut bilinear = 0.0;
    for p in 0..deltas.len() {
        bilinear += w[p] * w[p] * var_delta[p];
        for q in p + 1..deltas.len() {
            bilinear += 2.0 * w[p] * w[q] * stats::covariance(&deltas[p], &deltas[q]);
        }
    }

    Ok(Aggregate {
        vector: ExposureVector::new(values, Role::Proxy, "aggregate"),
        psi_w,
        eta_w: has_eta.then_some(eta_w),
        var_delta_w,
        var_delta_w_bilinear: bilinear,
        var_delta,
    })
}

/// Convenience: ψ, θ and η for a task matrix against share tables.
pub fn selection_for(tasks: &TaskMatrix, platform: &ShareTable, workforce: &ShareTable) -> Result<SelectionProfile> {
    let profile = compute_psi(platform, workforce)?.merge(compute_theta(tasks));
    crate::selection::compute_eta(&profile, tasks)
}
