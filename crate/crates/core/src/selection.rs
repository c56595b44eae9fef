//! Platform selection: between-occupation ψ, within-occupation θ, and the
//! task-selection residual η.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{OccOutcomeTable, ShareTable, TaskMatrix};
use crate::occ::OccId;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Occupation has no workforce share; ψ undefined.
    ZeroWorkforce,
    /// Occupation absent from the platform; ψ = 0, reweighting refuses it.
    ZeroPlatform,
    /// Platform task share on a task with zero workforce time; θ undefined.
    TaskNotInWorkforce,
    /// ψ = 0 dropped from log-scale skew metrics.
    LogUndefined,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::ZeroWorkforce => "zero_workforce",
            Flag::ZeroPlatform => "zero_platform",
            Flag::TaskNotInWorkforce => "task_not_in_workforce",
            Flag::LogUndefined => "log_undefined",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub occ: OccId,
    pub task: Option<String>,
    pub reason: Flag,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionProfile {
    pub psi: BTreeMap<OccId, f64>,
    pub theta: BTreeMap<OccId, BTreeMap<String, f64>>,
    pub eta: BTreeMap<OccId, f64>,
    pub excluded: Vec<Exclusion>,
}

impl SelectionProfile {
    pub fn from_psi(psi: impl IntoIterator<Item = (OccId, f64)>) -> Self {
        let psi: BTreeMap<_, _> = psi.into_iter().collect();
        let excluded = psi
            .iter()
            .filter(|(_, v)| **v == 0.0)
            .map(|(k, _)| Exclusion {
                occ: k.clone(),
                task: None,
                reason: Flag::ZeroPlatform,
            })
            .collect();
        SelectionProfile {
            psi,
            excluded,
            ..Default::default()
        }
    }

    pub fn psi(&self, occ: &OccId) -> Option<f64> {
        self.psi.get(occ).copied()
    }

    pub fn eta(&self, occ: &OccId) -> Option<f64> {
        self.eta.get(occ).copied()
    }

    pub fn theta(&self, occ: &OccId, task: &str) -> Option<f64> {
        self.theta.get(occ).and_then(|m| m.get(task)).copied()
    }

    /// Occupations carrying the given flag.
    pub fn flagged(&self, reason: Flag) -> Vec<&OccId> {
        self.excluded.iter().filter(|e| e.reason == reason).map(|e| &e.occ).collect()
    }

    pub fn flag_for(&self, occ: &OccId) -> Option<Flag> {
        self.excluded
            .iter()
            .find(|e| &e.occ == occ && e.task.is_none())
            .map(|e| e.reason)
    }

    /// Fill in the parts `other` has and `self` lacks.
    pub fn merge(mut self, other: SelectionProfile) -> Self {
        for (k, v) in other.psi {
            self.psi.entry(k).or_insert(v);
        }
        for (k, v) in other.theta {
            self.theta.entry(k).or_insert(v);
        }
        for (k, v) in other.eta {
            self.eta.entry(k).or_insert(v);
        }
        for e in other.excluded {
            if !self.excluded.contains(&e) {
                self.excluded.push(e);
            }
        }
        self
    }

    /// `occ_code,psi,flag`; ψ is blank when undefined.
    pub fn psi_csv_string(&self) -> String {
        let mut rows: BTreeMap<&OccId, (Option<f64>, &str)> = BTreeMap::new();
        for (k, v) in &self.psi {
            rows.insert(k, (Some(*v), ""));
        }
        for e in self.excluded.iter().filter(|e| e.task.is_none()) {
            let entry = rows.entry(&e.occ).or_insert((None, ""));
            entry.1 = e.reason.as_str();
        }
        let mut out = String::from("occ_code,psi,flag\n");
        for (k, (v, flag)) in rows {
            match v {
                Some(v) => out.push_str(&format!("{k},{v},{flag}\n")),
                None => out.push_str(&format!("{k},,{flag}\n")),
            }
        }
        out
    }

    pub fn psi_from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 || header[0] != "occ_code" || header[1] != "psi" {
            return Err(Error::schema("psi table", "expected header `occ_code,psi,flag`"));
        }
        let mut profile = SelectionProfile::default();
        for record in rdr.records() {
            let record = record?;
            let occ = OccId::parse(&record[0])?;
            let flag = record.get(2).unwrap_or("");
            if !record[1].is_empty() {
                let v: f64 = record[1]
                    .parse()
                    .map_err(|_| Error::schema("psi table", format!("bad psi `{}`", &record[1])))?;
                if v < 0.0 {
                    return Err(Error::Negative {
                        what: "psi",
                        code: occ.to_string(),
                        value: v,
                    });
                }
                profile.psi.insert(occ.clone(), v);
            }
            let reason = match flag {
                "" => None,
                "zero_platform" => Some(Flag::ZeroPlatform),
                "zero_workforce" => Some(Flag::ZeroWorkforce),
                other => return Err(Error::schema("psi table", format!("unknown flag `{other}`"))),
            };
            if let Some(reason) = reason {
                profile.excluded.push(Exclusion {
                    occ,
                    task: None,
                    reason,
                });
            }
        }
        Ok(profile)
    }

    pub fn load_psi(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        SelectionProfile::psi_from_csv_reader(file)
    }
}

/// ψ_o = f_p(o) / f(o) over the workforce support.
pub fn compute_psi(platform: &ShareTable, workforce: &ShareTable) -> Result<SelectionProfile> {
    if platform.level() != workforce.level() {
        return Err(Error::LevelMismatch(format!(
            "platform table is {} but workforce table is {}",
            platform.level(),
            workforce.level()
        )));
    }
    if !platform.iter().any(|(k, _)| workforce.get(k).is_some()) {
        return Err(Error::DisjointSupport(format!(
            "`{}` and `{}`",
            platform.source_label(),
            workforce.source_label()
        )));
    }
    let mut profile = SelectionProfile::default();
    for (occ, f) in workforce.iter() {
        if f == 0.0 {
            profile.excluded.push(Exclusion {
                occ: occ.clone(),
                task: None,
                reason: Flag::ZeroWorkforce,
            });
            continue;
        }
        let fp = platform.get(occ).unwrap_or(0.0);
        profile.psi.insert(occ.clone(), fp / f);
        if fp == 0.0 {
            profile.excluded.push(Exclusion {
                occ: occ.clone(),
                task: None,
                reason: Flag::ZeroPlatform,
            });
        }
    }
    for (occ, _) in platform.iter() {
        if workforce.get(occ).is_none() {
            profile.excluded.push(Exclusion {
                occ: occ.clone(),
                task: None,
                reason: Flag::ZeroWorkforce,
            });
        }
    }
    Ok(profile)
}

/// θ_{o,k} = q_{o,k,p} / q_{o,k} on every cell with positive workforce time.
pub fn compute_theta(tasks: &TaskMatrix) -> SelectionProfile {
    let mut profile = SelectionProfile::default();
    for (occ, list) in tasks.occupations() {
        let mut cells = BTreeMap::new();
        for t in list {
            if t.q > 0.0 {
                cells.insert(t.id.clone(), t.q_p / t.q);
            } else if t.q_p > 0.0 {
                profile.excluded.push(Exclusion {
                    occ: occ.clone(),
                    task: Some(t.id.clone()),
                    reason: Flag::TaskNotInWorkforce,
                });
            }
        }
        profile.theta.insert(occ.clone(), cells);
    }
    profile
}

/// η_o = ψ_o Σ_k (θ_{o,k} − 1) q_{o,k} τ_k for every occupation with ψ.
pub fn compute_eta(profile: &SelectionProfile, tasks: &TaskMatrix) -> Result<SelectionProfile> {
    let mut out = profile.clone();
    out.eta.clear();
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
            acc += (th - 1.0) * t.q * t.tau;
        }
        out.eta.insert(occ.clone(), psi * acc);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewMetrics {
    pub n: usize,
    pub var_psi: f64,
    pub sd_log_psi: f64,
    pub max_min_ratio: f64,
    pub weighted_var_psi: Option<f64>,
    pub weighted_sd_log_psi: Option<f64>,
    /// Occupations left out of the log metrics (ψ = 0).
    pub log_excluded: Vec<OccId>,
}

/// Between-occupation skew of ψ (population moments; weights are employment).
pub fn skew_metrics(profile: &SelectionProfile, weights: Option<&OccOutcomeTable>) -> Result<SkewMetrics> {
    let all: Vec<(&OccId, f64)> = profile.psi.iter().map(|(k, v)| (k, *v)).collect();
    let positive: Vec<(&OccId, f64)> = all.iter().copied().filter(|(_, v)| *v > 0.0).collect();
    if positive.len() < 2 {
        return Err(Error::Degenerate(
            "skew metrics need at least two occupations with psi > 0".into(),
        ));
    }
    let psi_all: Vec<f64> = all.iter().map(|(_, v)| *v).collect();
    let logs: Vec<f64> = positive.iter().map(|(_, v)| v.ln()).collect();
    let max = positive.iter().map(|(_, v)| *v).fold(f64::MIN, f64::max);
    let min = positive.iter().map(|(_, v)| *v).fold(f64::MAX, f64::min);

    let (weighted_var_psi, weighted_sd_log_psi) = match weights {
        Some(table) => {
            let pick = |rows: &[(&OccId, f64)]| -> Result<(Vec<f64>, Vec<f64>)> {
                let mut x = Vec::new();
                let mut w = Vec::new();
                for (k, v) in rows {
                    let wt = table.weight(k).ok_or_else(|| Error::Missing {
                        what: "employment weight",
                        code: k.to_string(),
                    })?;
                    x.push(*v);
                    w.push(wt);
                }
                Ok((x, w))
            };
            let (x, w) = pick(&all)?;
            let (xp, wp) = pick(&positive)?;
            let lx: Vec<f64> = xp.iter().map(|v| v.ln()).collect();
            (
                Some(stats::weighted_variance(&x, &w)),
                Some(stats::weighted_variance(&lx, &wp).sqrt()),
            )
        }
        None => (None, None),
    };

    Ok(SkewMetrics {
        n: all.len(),
        var_psi: stats::variance(&psi_all),
        sd_log_psi: stats::variance(&logs).sqrt(),
        max_min_ratio: max / min,
        weighted_var_psi,
        weighted_sd_log_psi,
        log_excluded: all
            .iter()
            .filter(|(_, v)| *v <= 0.0)
            .map(|(k, _)| (*k).clone())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{LoadOptions, Task};

    fn occ(c: &str) -> OccId {
        OccId::parse(c).unwrap()
    }

    fn shares(rows: &[(&str, f64)]) -> ShareTable {
        ShareTable::from_entries(
            "t",
            rows.iter().map(|(c, v)| (occ(c), *v)),
            LoadOptions {
                normalize: true,
                percent: false,
            },
        )
        .unwrap()
    }

    fn two_task(q: [f64; 2], qp: [f64; 2], tau: [f64; 2]) -> TaskMatrix {
        TaskMatrix::from_rows(
            (0..2).map(|k| {
                (
                    occ("151252"),
                    Task {
                        id: format!("t{k}"),
                        q: q[k],
                        q_p: qp[k],
                        tau: tau[k],
                    },
                )
            }),
            LoadOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn identical_tables_give_unit_psi() {
        let w = shares(&[("11", 0.3), ("15", 0.7)]);
        let p = compute_psi(&w, &w).unwrap();
        assert!(p.psi.values().all(|v| (*v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn zero_platform_and_zero_workforce_flags() {
        let w = shares(&[("11", 0.5), ("15", 0.5), ("35", 0.0)]);
        let p = shares(&[("11", 0.4), ("15", 0.6)]);
        let prof = compute_psi(&p, &w).unwrap();
        assert_eq!(prof.flagged(Flag::ZeroWorkforce), vec![&occ("35")]);
        let w2 = shares(&[("11", 0.5), ("15", 0.5)]);
        let p2 = shares(&[("11", 1.0)]);
        let prof2 = compute_psi(&p2, &w2).unwrap();
        assert_eq!(prof2.psi(&occ("15")), Some(0.0));
        assert_eq!(prof2.flagged(Flag::ZeroPlatform), vec![&occ("15")]);
        assert!(prof2.psi_csv_string().contains("15,0,zero_platform"));
    }

    #[test]
    fn psi_errors() {
        let w = shares(&[("11", 1.0)]);
        let p = shares(&[("13", 1.0)]);
        assert!(matches!(compute_psi(&p, &w), Err(Error::DisjointSupport(_))));
        let d = shares(&[("111011", 1.0)]);
        assert!(matches!(compute_psi(&d, &w), Err(Error::LevelMismatch(_))));
    }

    #[test]
    fn theta_arithmetic_and_normalization_identity() {
        let tm = two_task([0.5, 0.5], [0.8, 0.2], [1.0, 0.0]);
        let th = compute_theta(&tm);
        assert!((th.theta(&occ("151252"), "t0").unwrap() - 1.6).abs() < 1e-15);
        assert!((th.theta(&occ("151252"), "t1").unwrap() - 0.4).abs() < 1e-15);
        let s: f64 = tm.tasks(&occ("151252")).unwrap().iter().map(|t| th.theta(&occ("151252"), &t.id).unwrap() * t.q).sum();
        assert!((s - 1.0).abs() < 1e-9);

        let same = two_task([0.3, 0.7], [0.3, 0.7], [1.0, 0.0]);
        assert!(compute_theta(&same).theta[&occ("151252")].values().all(|v| *v == 1.0));
    }

    #[test]
    fn task_not_in_workforce_flag() {
        let tm = two_task([1.0, 0.0], [0.5, 0.5], [1.0, 0.0]);
        let th = compute_theta(&tm);
        assert_eq!(th.excluded[0].reason, Flag::TaskNotInWorkforce);
    }

    #[test]
    fn eta_hand_value() {
        // 2 · (0.6·0.5·1 + (−0.6)·0.5·0) = 0.6
        let tm = two_task([0.5, 0.5], [0.8, 0.2], [1.0, 0.0]);
        let prof = SelectionProfile::from_psi([(occ("151252"), 2.0)]).merge(compute_theta(&tm));
        let eta = compute_eta(&prof, &tm).unwrap();
        assert!((eta.eta(&occ("151252")).unwrap() - 0.6).abs() < 1e-15);

        let flat = two_task([0.5, 0.5], [0.5, 0.5], [1.0, 0.0]);
        let prof = SelectionProfile::from_psi([(occ("151252"), 2.0)]).merge(compute_theta(&flat));
        assert_eq!(compute_eta(&prof, &flat).unwrap().eta(&occ("151252")), Some(0.0));

        let zero_tau = two_task([0.5, 0.5], [0.8, 0.2], [0.0, 0.0]);
        let prof = SelectionProfile::from_psi([(occ("151252"), 2.0)]).merge(compute_theta(&zero_tau));
        assert_eq!(compute_eta(&prof, &zero_tau).unwrap().eta(&occ("151252")), Some(0.0));

        let missing = compute_theta(&tm);
        assert!(matches!(compute_eta(&missing, &tm), Err(Error::Missing { what: "psi", .. })));
    }

    #[test]
    fn skew_metric_cases() {
        let unit = SelectionProfile::from_psi([(occ("11"), 1.0), (occ("13"), 1.0)]);
        let m = skew_metrics(&unit, None).unwrap();
        assert_eq!((m.var_psi, m.sd_log_psi, m.max_min_ratio), (0.0, 0.0, 1.0));

        let pair = SelectionProfile::from_psi([(occ("11"), 2.0), (occ("13"), 0.5)]);
        let m = skew_metrics(&pair, None).unwrap();
        assert!((m.max_min_ratio - 4.0).abs() < 1e-15);
        assert!((m.sd_log_psi - 2f64.ln()).abs() < 1e-15);

        let with_zero = SelectionProfile::from_psi([(occ("11"), 2.0), (occ("13"), 0.5), (occ("15"), 0.0)]);
        let m = skew_metrics(&with_zero, None).unwrap();
        assert_eq!(m.log_excluded, vec![occ("15")]);
        assert!((m.sd_log_psi - 2f64.ln()).abs() < 1e-15);

        let one = SelectionProfile::from_psi([(occ("11"), 2.0)]);
        assert!(skew_metrics(&one, None).is_err());
    }

    #[test]
    fn psi_csv_round_trip() {
        let prof = SelectionProfile::from_psi([(occ("11"), 2.5), (occ("13"), 0.0)]);
        let back = SelectionProfile::psi_from_csv_reader(prof.psi_csv_string().as_bytes()).unwrap();
        assert_eq!(back.psi, prof.psi);
        assert_eq!(back.flagged(Flag::ZeroPlatform), vec![&occ("13")]);
    }
}
