//! Descriptive and inferential diagnostics across measures and waves.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{OccOutcomeTable, ShareTable};
use crate::occ::{Level, OccId};
use crate::rng;
use crate::stats;

/// Pairwise Spearman correlations between named measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub rho: Vec<Vec<f64>>,
    /// Common-support size per pair.
    pub support: Vec<Vec<usize>>,
}

impl CorrelationMatrix {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("measure");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.rho) {
            out.push_str(l);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn correlation_matrix(measures: &[(String, BTreeMap<OccId, f64>)]) -> Result<CorrelationMatrix> {
    let m = measures.len();
    if m < 2 {
        return Err(Error::InvalidArgument("correlation matrix needs at least two measures".into()));
    }
    let mut rho = vec![vec![1.0; m]; m];
    let mut support = vec![vec![0usize; m]; m];
    for i in 0..m {
        support[i][i] = measures[i].1.len();
        for j in i + 1..m {
            let (a, b): (Vec<f64>, Vec<f64>) = measures[i]
                .1
                .iter()
                .filter_map(|(k, v)| measures[j].1.get(k).map(|u| (*v, *u)))
                .unzip();
            if a.len() < 3 {
                return Err(Error::DisjointSupport(format!(
                    "`{}` and `{}` share {} occupations (need 3)",
                    measures[i].0,
                    measures[j].0,
                    a.len()
                )));
            }
            let r = stats::spearman(&a, &b);
            rho[i][j] = r;
            rho[j][i] = r;
            support[i][j] = a.len();
            support[j][i] = a.len();
        }
    }
    Ok(CorrelationMatrix {
        labels: measures.iter().map(|m| m.0.clone()).collect(),
        rho,
        support,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// counts[a][b]: occupations in quartile a in the first wave and b in the second.
    pub counts: [[usize; 4]; 4],
    pub n: usize,
    pub same_quartile: f64,
    pub one_move: f64,
    pub two_plus_move: f64,
}

impl TransitionMatrix {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("quartile_a,q1,q2,q3,q4\n");
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&format!("q{},{},{},{},{}\n", i + 1, row[0], row[1], row[2], row[3]));
        }
        out
    }
}

/// Weighted quartile (0..=3) per occupation.
///
/// Occupations are ordered by value with ties broken by code; an occupation's
/// quartile is set by the weight share strictly before it, with lower-inclusive
/// boundaries at 0.25, 0.5 and 0.75.
pub fn weighted_quartiles(values: &BTreeMap<OccId, f64>, weights: &BTreeMap<OccId, f64>) -> Result<BTreeMap<OccId, usize>> {
    let mut order: Vec<(&OccId, f64, f64)> = values
        .iter()
        .map(|(k, v)| {
            let w = weights.get(k).copied().ok_or_else(|| Error::Missing {
                what: "weight",
                code: k.to_string(),
            })?;
            Ok((k, *v, w))
        })
        .collect::<Result<_>>()?;
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let total: f64 = order.iter().map(|x| x.2).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("total weight is zero".into()));
    }
    let mut before = 0.0;
    let mut out = BTreeMap::new();
    for (k, _, w) in order {
        let q = ((4.0 * before / total).floor() as usize).min(3);
        out.insert(k.clone(), q);
        before += w;
    }
    Ok(out)
}

pub fn quartile_transitions(
    wave_a: &BTreeMap<OccId, f64>,
    wave_b: &BTreeMap<OccId, f64>,
    weights: &OccOutcomeTable,
) -> Result<TransitionMatrix> {
    let common: BTreeSet<&OccId> = wave_a.keys().filter(|k| wave_b.contains_key(*k)).collect();
    if common.is_empty() {
        return Err(Error::DisjointSupport("the two waves".into()));
    }
    let restrict = |m: &BTreeMap<OccId, f64>| -> BTreeMap<OccId, f64> {
        m.iter().filter(|(k, _)| common.contains(k)).map(|(k, v)| (k.clone(), *v)).collect()
    };
    let w: BTreeMap<OccId, f64> = weights.iter().map(|(k, r)| (k.clone(), r.weight)).collect();
    let qa = weighted_quartiles(&restrict(wave_a), &w)?;
    let qb = weighted_quartiles(&restrict(wave_b), &w)?;
    let mut counts = [[0usize; 4]; 4];
    for (k, a) in &qa {
        counts[*a][qb[k]] += 1;
    }
    let n = qa.len();
    let mut same = 0;
    let mut one = 0;
    for (i, row) in counts.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            match i.abs_diff(j) {
                0 => same += c,
                1 => one += c,
                _ => {}
            }
        }
    }
    let nf = n as f64;
    Ok(TransitionMatrix {
        counts,
        n,
        same_quartile: same as f64 / nf,
        one_move: one as f64 / nf,
        two_plus_move: (n - same - one) as f64 / nf,
    })
}

/// Σ|share_b − share_a| in percentage points, at the requested level.
pub fn l1_shift(wave_a: &ShareTable, wave_b: &ShareTable, level: Level) -> Result<f64> {
    if wave_a.level() != wave_b.level() {
        return Err(Error::LevelMismatch("the two waves are at different levels".into()));
    }
    let (a, b) = match (level, wave_a.level()) {
        (Level::MajorGroup, Level::Detailed) => (wave_a.collapse_to_major(), wave_b.collapse_to_major()),
        (Level::Detailed, Level::MajorGroup) => {
            return Err(Error::LevelMismatch("cannot compute a detailed L1 shift from major-group tables".into()))
        }
        _ => (wave_a.clone(), wave_b.clone()),
    };
    let keys: BTreeSet<&OccId> = a.entries().keys().chain(b.entries().keys()).collect();
    Ok(100.0
        * keys
            .into_iter()
            .map(|k| (a.get(k).unwrap_or(0.0) - b.get(k).unwrap_or(0.0)).abs())
            .sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCv {
    pub n: usize,
    pub mean_ratio: f64,
    /// Population SD of the ratios over their mean.
    pub cv: f64,
    pub ratios: BTreeMap<OccId, f64>,
}

/// Growth ratios share_b/share_a within an optional major group.
pub fn growth_ratio_cv(wave_a: &ShareTable, wave_b: &ShareTable, subset: Option<&str>) -> Result<GrowthCv> {
    let mut ratios = BTreeMap::new();
    for (k, a) in wave_a.iter() {
        if subset.is_some_and(|g| k.major_group() != g) {
            continue;
        }
        let b = wave_b.get(k).unwrap_or(0.0);
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::Degenerate(format!("`{k}` lacks a positive share in both waves")));
        }
        ratios.insert(k.clone(), b / a);
    }
    if ratios.len() < 2 {
        return Err(Error::Degenerate("growth CV needs at least two occupations".into()));
    }
    let r: Vec<f64> = ratios.values().copied().collect();
    let mean_ratio = stats::mean(&r);
    Ok(GrowthCv {
        n: r.len(),
        mean_ratio,
        cv: stats::variance(&r).sqrt() / mean_ratio,
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub outcome: String,
    pub n: usize,
    pub rho_a: f64,
    pub rho_b: f64,
    pub delta: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
    pub raw_reject: bool,
    pub holm_reject: bool,
    pub bh_reject: bool,
    /// Resamples dropped because a ranking or the outcome was constant.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTestResult {
    pub rows: Vec<GapRow>,
    pub alpha: f64,
    pub q: f64,
    pub replications: usize,
    pub seed: u64,
}

impl GapTestResult {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("outcome,n,rho_a,rho_b,delta,se,ci_low,ci_high,p,raw_reject,holm_reject,bh_reject\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.outcome, r.n, r.rho_a, r.rho_b, r.delta, r.se, r.ci_low, r.ci_high, r.p, r.raw_reject, r.holm_reject, r.bh_reject
            ));
        }
        out
    }
}

pub const DEFAULT_GAP_REPLICATIONS: usize = 5_000;

/// Δ_o = ρ(outcome, a) − ρ(outcome, b) per outcome, with an occupation bootstrap.
///
/// `se` and the interval are the bootstrap SD and percentile interval of Δ.
/// The p-value compares atanh ρ_a − atanh ρ_b with its bootstrap SD on the
/// normal scale; the transform keeps the SE from shrinking as |ρ| grows, which
/// otherwise inflates the extreme tail that multiple-testing corrections use.
pub fn ranking_gap_test(
    outcomes: &[OccOutcomeTable],
    ranking_a: &ShareTable,
    ranking_b: &ShareTable,
    replications: usize,
    seed: u64,
    alpha: f64,
    q: f64,
) -> Result<GapTestResult> {
    if outcomes.is_empty() {
        return Err(Error::InvalidArgument("at least one outcome required".into()));
    }
    if replications < 2 {
        return Err(Error::InvalidArgument("at least two bootstrap replications required".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0 && q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument("alpha and q must lie in (0, 1)".into()));
    }
    let mut rows = Vec::with_capacity(outcomes.len());
    for (oi, outcome) in outcomes.iter().enumerate() {
        let mut y = Vec::new();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (k, row) in outcome.iter() {
            if let (Some(va), Some(vb)) = (ranking_a.get(k), ranking_b.get(k)) {
                y.push(row.value);
                a.push(va);
                b.push(vb);
            }
        }
        let n = y.len();
        if n < 5 {
            return Err(Error::DisjointSupport(format!(
                "outcome `{}` shares {n} occupations with the rankings (need 5)",
                outcome.label()
            )));
        }
        let rho_a = stats::spearman(&y, &a);
        let rho_b = stats::spearman(&y, &b);
        let delta = rho_a - rho_b;
        let delta_z = fisher_z(rho_a) - fisher_z(rho_b);
        let draws: Vec<(f64, f64)> = (0..replications as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng::stream(seed, ((oi as u64) << 32) | r);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
                let as_: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
                let bs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
                let (ra, rb) = (stats::spearman(&ys, &as_), stats::spearman(&ys, &bs));
                (ra - rb, fisher_z(ra) - fisher_z(rb))
            })
            .collect();
        let (mut kept, kept_z): (Vec<f64>, Vec<f64>) =
            draws.into_iter().filter(|(d, dz)| d.is_finite() && dz.is_finite()).unzip();
        let dropped = replications - kept.len();
        if kept.len() < 2 {
            return Err(Error::Degenerate(format!("bootstrap for `{}` produced no usable resamples", outcome.label())));
        }
        kept.sort_by(f64::total_cmp);
        let se = stats::sample_sd(&kept);
        let se_z = stats::sample_sd(&kept_z);
        let p = if delta_z.is_finite() && se_z > 0.0 {
            stats::two_sided_normal_p(delta_z / se_z)
        } else if delta == 0.0 {
            1.0
        } else {
            0.0
        };
        rows.push(GapRow {
            outcome: outcome.label().to_string(),
            n,
            rho_a,
            rho_b,
            delta,
            se,
            ci_low: stats::quantile_sorted(&kept, alpha / 2.0),
            ci_high: stats::quantile_sorted(&kept, 1.0 - alpha / 2.0),
            p,
            raw_reject: p < alpha,
            holm_reject: false,
            bh_reject: false,
            dropped,
        });
    }
    let ps: Vec<f64> = rows.iter().map(|r| r.p).collect();
    for ((row, h), bh) in rows.iter_mut().zip(stats::holm(&ps, alpha)).zip(stats::benjamini_hochberg(&ps, q)) {
        row.holm_reject = h;
        row.bh_reject = bh;
    }
    Ok(GapTestResult {
        rows,
        alpha,
        q,
        replications,
        seed,
    })
}

fn fisher_z(r: f64) -> f64 {
    r.atanh()
}

/// budget · share per occupation.
pub fn allocate(budget: f64, shares: &ShareTable) -> Result<BTreeMap<OccId, f64>> {
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::InvalidArgument(format!("budget must be > 0, got {budget}")));
    }
    Ok(shares.iter().map(|(k, s)| (k.clone(), budget * s)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationComparison {
    pub budget: f64,
    /// Σ over selected occupations of (allocation a − allocation b).
    pub shifted_amount: f64,
    pub shifted_share: f64,
    pub selected_a: f64,
    pub selected_b: f64,
    pub selected: Vec<OccId>,
}

pub fn compare_allocations(
    a: &BTreeMap<OccId, f64>,
    b: &BTreeMap<OccId, f64>,
    selector: impl Fn(&OccId) -> bool,
) -> Result<AllocationComparison> {
    let budget: f64 = a.values().sum();
    if !(budget > 0.0) {
        return Err(Error::InvalidArgument("allocation a has no budget".into()));
    }
    let keys: BTreeSet<&OccId> = a.keys().chain(b.keys()).collect();
    let selected: Vec<OccId> = keys.into_iter().filter(|k| selector(k)).cloned().collect();
    let selected_a: f64 = selected.iter().map(|k| a.get(k).copied().unwrap_or(0.0)).sum();
    let selected_b: f64 = selected.iter().map(|k| b.get(k).copied().unwrap_or(0.0)).sum();
    let shifted_amount = selected_a - selected_b;
    Ok(AllocationComparison {
        budget,
        shifted_amount,
        shifted_share: shifted_amount / budget,
        selected_a,
        selected_b,
        selected,
    })
}

/// Occupation attributes used to select allocation targets.
#[derive(Debug, Clone, PartialEq)]
pub struct OccAttributes {
    pub ba_share: BTreeMap<OccId, f64>,
    pub wage: BTreeMap<OccId, f64>,
}

impl OccAttributes {
    /// Reads `occ_code`, `ba_share` and `wage` columns; other columns are ignored.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        const CTX: &str = "occupation attributes";
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::schema(CTX, format!("missing column `{name}`")))
        };
        let (ci, cb, cw) = (col("occ_code")?, col("ba_share")?, col("wage")?);
        let mut out = OccAttributes {
            ba_share: BTreeMap::new(),
            wage: BTreeMap::new(),
        };
        for record in rdr.records() {
            let record = record?;
            let occ = OccId::parse(&record[ci])?;
            let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::schema(CTX, format!("bad number `{s}`")));
            if out.ba_share.insert(occ.clone(), parse(&record[cb])?).is_some() {
                return Err(Error::Duplicate(occ.to_string()));
            }
            out.wage.insert(occ, parse(&record[cw])?);
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        OccAttributes::from_csv_reader(f)
    }

    /// Occupations with wage strictly above the (unweighted) median and BA+ share above `ba_threshold`.
    pub fn high_wage_high_ba(&self, ba_threshold: f64) -> BTreeSet<OccId> {
        let mut w: Vec<f64> = self.wage.values().copied().collect();
        w.sort_by(f64::total_cmp);
        let median = stats::quantile_sorted(&w, 0.5);
        self.wage
            .iter()
            .filter(|(k, wage)| **wage > median && self.ba_share.get(*k).is_some_and(|b| *b > ba_threshold))
            .map(|(k, _)| k.clone())
            .collect()
    }
}
