//! Loading, validation, and reshaping of occupation-level input tables.
//!
//! Every table has one canonical CSV form (fixed header, UTF-8, `.` as the
//! decimal point, shortest round-trip float formatting) and internal shares
//! are always fractions.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::occ::{Level, OccId};

/// Input sums within this distance of 1 are silently rescaled.
pub const INPUT_SUM_TOLERANCE: f64 = 1e-6;
/// Sums after normalization must be within this distance of 1.
pub const NORMALIZED_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Values are percentages; divide by 100 on load.
    pub percent: bool,
    /// Rescale to sum 1 even when the raw sum is far from 1.
    pub normalize: bool,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str], context: &str) -> Result<()> {
    let header = reader.headers()?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::schema(
            context,
            format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn parse_f64(raw: &str, column: &str, context: &str) -> Result<f64> {
    let value: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::schema(context, format!("column `{column}`: `{raw}` is not a number")))?;
    if !value.is_finite() {
        return Err(Error::schema(context, format!("column `{column}`: non-finite value")));
    }
    Ok(value)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

fn table_level<'a>(codes: impl Iterator<Item = &'a OccId>, context: &str) -> Result<Level> {
    let levels: BTreeSet<_> = codes.map(|c| c.level() == Level::Detailed).collect();
    match levels.len() {
        0 => Err(Error::schema(context, "table is empty")),
        1 if levels.contains(&true) => Ok(Level::Detailed),
        1 => Ok(Level::MajorGroup),
        _ => Err(Error::LevelMismatch(format!(
            "{context} mixes 2-digit and 6-digit codes"
        ))),
    }
}

// ---------------------------------------------------------------------------
// ShareTable

/// Occupation distribution: nonnegative shares summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareTable {
    source_label: String,
    level: Level,
    entries: BTreeMap<OccId, f64>,
}

impl ShareTable {
    pub fn from_entries(
        source_label: impl Into<String>,
        entries: impl IntoIterator<Item = (OccId, f64)>,
        opts: LoadOptions,
    ) -> Result<Self> {
        let source_label = source_label.into();
        let scale = if opts.percent { 0.01 } else { 1.0 };
        let mut map = BTreeMap::new();
        for (occ, raw) in entries {
            let share = raw * scale;
            if !share.is_finite() {
                return Err(Error::schema(&source_label, format!("non-finite share for `{occ}`")));
            }
            if share < 0.0 {
                return Err(Error::Negative {
                    what: "share",
                    code: occ.to_string(),
                    value: share,
                });
            }
            if map.insert(occ.clone(), share).is_some() {
                return Err(Error::Duplicate(occ.to_string()));
            }
        }
        let level = table_level(map.keys(), &source_label)?;
        let sum: f64 = map.values().sum();
        if sum <= 0.0 {
            return Err(Error::Normalization { sum });
        }
        if (sum - 1.0).abs() > INPUT_SUM_TOLERANCE && !opts.normalize {
            return Err(Error::Normalization { sum });
        }
        if sum != 1.0 {
            for v in map.values_mut() {
                *v /= sum;
            }
        }
        let check: f64 = map.values().sum();
        debug_assert!((check - 1.0).abs() <= NORMALIZED_SUM_TOLERANCE);
        Ok(ShareTable {
            source_label,
            level,
            entries: map,
        })
    }

    pub fn from_csv_reader<R: Read>(reader: R, source_label: &str, opts: LoadOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        check_header(&mut rdr, &["occ_code", "share"], source_label)?;
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let occ = OccId::parse(&record[0])?;
            let share = parse_f64(&record[1], "share", source_label)?;
            rows.push((occ, share));
        }
        ShareTable::from_entries(source_label, rows, opts)
    }

    pub fn load(path: impl AsRef<Path>, source_label: &str, opts: LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        ShareTable::from_csv_reader(open(path)?, source_label, opts)
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, occ: &OccId) -> Option<f64> {
        self.entries.get(occ).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OccId, f64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn entries(&self) -> &BTreeMap<OccId, f64> {
        &self.entries
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("occ_code,share\n");
        for (occ, share) in &self.entries {
            out.push_str(&format!("{occ},{share}\n"));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv_string())
    }

    /// Sum detailed shares up to their major groups.
    pub fn collapse_to_major(&self) -> ShareTable {
        let mut map: BTreeMap<OccId, f64> = BTreeMap::new();
        for (occ, share) in &self.entries {
            *map.entry(occ.parent()).or_insert(0.0) += share;
        }
        ShareTable {
            source_label: self.source_label.clone(),
            level: Level::MajorGroup,
            entries: map,
        }
    }
}

// ---------------------------------------------------------------------------
// TaskMatrix

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    /// Workforce task-time share within the occupation.
    pub q: f64,
    /// Platform task share within the occupation.
    pub q_p: f64,
    /// Capability rubric score in [0, 1].
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMatrix {
    occupations: BTreeMap<OccId, Vec<Task>>,
}

impl TaskMatrix {
    /// Validates per-occupation share sums; with `opts.normalize` both share
    /// columns are rescaled within each occupation.
    pub fn from_rows(rows: impl IntoIterator<Item = (OccId, Task)>, opts: LoadOptions) -> Result<Self> {
        let mut occupations: BTreeMap<OccId, Vec<Task>> = BTreeMap::new();
        for (occ, task) in rows {
            for (what, v) in [("q", task.q), ("q_p", task.q_p)] {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Negative {
                        what: if what == "q" { "task share q" } else { "task share q_p" },
                        code: occ.to_string(),
                        value: v,
                    });
                }
            }
            if !(0.0..=1.0).contains(&task.tau) {
                return Err(Error::schema(
                    "task matrix",
                    format!("tau {} for `{occ}`/{} outside [0,1]", task.tau, task.id),
                ));
            }
            let tasks = occupations.entry(occ.clone()).or_default();
            if tasks.iter().any(|t| t.id == task.id) {
                return Err(Error::Duplicate(format!("{occ}/{}", task.id)));
            }
            tasks.push(task);
        }
        if occupations.is_empty() {
            return Err(Error::schema("task matrix", "no rows"));
        }
        for (occ, tasks) in occupations.iter_mut() {
            let sq: f64 = tasks.iter().map(|t| t.q).sum();
            let sp: f64 = tasks.iter().map(|t| t.q_p).sum();
            for (label, sum) in [("q", sq), ("q_p", sp)] {
                let off = (sum - 1.0).abs();
                if sum <= 0.0 || (off > NORMALIZED_SUM_TOLERANCE && !opts.normalize) {
                    return Err(Error::schema(
                        "task matrix",
                        format!("{label} shares for `{occ}` sum to {sum}, expected 1"),
                    ));
                }
            }
            if opts.normalize {
                for t in tasks.iter_mut() {
                    t.q /= sq;
                    t.q_p /= sp;
                }
            }
        }
        Ok(TaskMatrix { occupations })
    }

    pub fn from_csv_reader<R: Read>(reader: R, opts: LoadOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        check_header(&mut rdr, &["occ_code", "task_id", "q", "q_p", "tau"], "task matrix")?;
        let scale = if opts.percent { 0.01 } else { 1.0 };
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let occ = OccId::parse(&record[0])?;
            rows.push((
                occ,
                Task {
                    id: record[1].to_string(),
                    q: parse_f64(&record[2], "q", "task matrix")? * scale,
                    q_p: parse_f64(&record[3], "q_p", "task matrix")? * scale,
                    tau: parse_f64(&record[4], "tau", "task matrix")?,
                },
            ));
        }
        TaskMatrix::from_rows(rows, opts)
    }

    pub fn load(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Self> {
        TaskMatrix::from_csv_reader(open(path.as_ref())?, opts)
    }

    pub fn occupations(&self) -> impl Iterator<Item = (&OccId, &[Task])> {
        self.occupations.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn tasks(&self, occ: &OccId) -> Option<&[Task]> {
        self.occupations.get(occ).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.occupations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn level(&self) -> Result<Level> {
        table_level(self.occupations.keys(), "task matrix")
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("occ_code,task_id,q,q_p,tau\n");
        for (occ, tasks) in &self.occupations {
            for t in tasks {
                out.push_str(&format!("{occ},{},{},{},{}\n", t.id, t.q, t.q_p, t.tau));
            }
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv_string())
    }
}

// ---------------------------------------------------------------------------
// OccOutcomeTable

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub value: f64,
    /// Employment weight (persons).
    pub weight: f64,
}

/// One outcome per occupation with a positive employment weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccOutcomeTable {
    label: String,
    rows: BTreeMap<OccId, OutcomeRow>,
}

impl OccOutcomeTable {
    pub fn from_rows(label: impl Into<String>, rows: impl IntoIterator<Item = (OccId, OutcomeRow)>) -> Result<Self> {
        let label = label.into();
        let mut map = BTreeMap::new();
        for (occ, row) in rows {
            if !row.value.is_finite() {
                return Err(Error::schema(&label, format!("non-finite outcome for `{occ}`")));
            }
            if !(row.weight > 0.0) || !row.weight.is_finite() {
                return Err(Error::schema(&label, format!("weight for `{occ}` must be positive")));
            }
            if map.insert(occ.clone(), row).is_some() {
                return Err(Error::Duplicate(occ.to_string()));
            }
        }
        table_level(map.keys(), &label)?;
        Ok(OccOutcomeTable { label, rows: map })
    }

    pub fn from_csv_reader<R: Read>(reader: R, label: &str, opts: LoadOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        check_header(&mut rdr, &["occ_code", "outcome", "weight"], label)?;
        let scale = if opts.percent { 0.01 } else { 1.0 };
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            rows.push((
                OccId::parse(&record[0])?,
                OutcomeRow {
                    value: parse_f64(&record[1], "outcome", label)? * scale,
                    weight: parse_f64(&record[2], "weight", label)?,
                },
            ));
        }
        OccOutcomeTable::from_rows(label, rows)
    }

    pub fn load(path: impl AsRef<Path>, label: &str, opts: LoadOptions) -> Result<Self> {
        OccOutcomeTable::from_csv_reader(open(path.as_ref())?, label, opts)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn level(&self) -> Level {
        self.rows.keys().next().map(OccId::level).unwrap_or(Level::Detailed)
    }

    pub fn get(&self, occ: &OccId) -> Option<OutcomeRow> {
        self.rows.get(occ).copied()
    }

    pub fn weight(&self, occ: &OccId) -> Option<f64> {
        self.rows.get(occ).map(|r| r.weight)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OccId, OutcomeRow)> {
        self.rows.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Employment weights as a share table.
    pub fn weight_shares(&self) -> Result<ShareTable> {
        ShareTable::from_entries(
            format!("{} weights", self.label),
            self.rows.iter().map(|(k, r)| (k.clone(), r.weight)),
            LoadOptions {
                percent: false,
                normalize: true,
            },
        )
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("occ_code,outcome,weight\n");
        for (occ, r) in &self.rows {
            out.push_str(&format!("{occ},{},{}\n", r.value, r.weight));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv_string())
    }
}

// ---------------------------------------------------------------------------
// Crosswalk

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosswalkEntry {
    pub source: String,
    pub target: OccId,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitRule {
    Equal,
    #[default]
    Employment,
}

/// Many-to-many code mapping with allocation weights summing to one per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crosswalk {
    entries: Vec<CrosswalkEntry>,
}

impl Crosswalk {
    pub fn new(entries: Vec<CrosswalkEntry>) -> Result<Self> {
        let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(Error::Negative {
                    what: "crosswalk weight",
                    code: e.source.clone(),
                    value: e.weight,
                });
            }
            if !seen.insert((e.source.as_str(), &e.target)) {
                return Err(Error::Duplicate(format!("{} -> {}", e.source, e.target)));
            }
            *sums.entry(&e.source).or_insert(0.0) += e.weight;
        }
        for (source, sum) in &sums {
            if (sum - 1.0).abs() > NORMALIZED_SUM_TOLERANCE {
                return Err(Error::schema(
                    "crosswalk",
                    format!("weights for source `{source}` sum to {sum}, expected 1"),
                ));
            }
        }
        Ok(Crosswalk { entries })
    }

    /// Build from unweighted (source, target) pairs using the given split rule.
    /// `reference` supplies employment for [`SplitRule::Employment`]; targets
    /// without reference employment get zero weight unless every target of
    /// the source lacks it, in which case the split falls back to equal.
    pub fn from_pairs(
        pairs: &[(String, OccId)],
        rule: SplitRule,
        reference: Option<&OccOutcomeTable>,
    ) -> Result<Self> {
        let mut by_source: BTreeMap<&str, Vec<&OccId>> = BTreeMap::new();
        for (s, t) in pairs {
            by_source.entry(s).or_default().push(t);
        }
        let mut entries = Vec::with_capacity(pairs.len());
        for (source, targets) in by_source {
            let raw: Vec<f64> = match (rule, reference) {
                (SplitRule::Employment, Some(reference)) => targets
                    .iter()
                    .map(|t| reference.weight(t).unwrap_or(0.0))
                    .collect(),
                (SplitRule::Employment, None) => {
                    return Err(Error::InvalidArgument(
                        "employment-weighted crosswalk needs reference weights".into(),
                    ))
                }
                (SplitRule::Equal, _) => vec![1.0; targets.len()],
            };
            let total: f64 = raw.iter().sum();
            let n = targets.len() as f64;
            for (t, w) in targets.into_iter().zip(raw) {
                let weight = if total > 0.0 { w / total } else { 1.0 / n };
                entries.push(CrosswalkEntry {
                    source: source.to_string(),
                    target: t.clone(),
                    weight,
                });
            }
        }
        Crosswalk::new(entries)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        check_header(&mut rdr, &["source_code", "target_code", "weight"], "crosswalk")?;
        let mut entries = Vec::new();
        for record in rdr.records() {
            let record = record?;
            entries.push(CrosswalkEntry {
                source: record[0].to_string(),
                target: OccId::parse(&record[1])?,
                weight: parse_f64(&record[2], "weight", "crosswalk")?,
            });
        }
        Crosswalk::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Crosswalk::from_csv_reader(open(path.as_ref())?)
    }

    pub fn entries(&self) -> &[CrosswalkEntry] {
        &self.entries
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("source_code,target_code,weight\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.source, e.target, e.weight));
        }
        out
    }
}

/// Result of mapping a share table through a crosswalk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosswalkOutcome {
    /// Target shares before renormalization; they sum to `matched_mass`.
    pub shares: BTreeMap<OccId, f64>,
    pub matched_mass: f64,
    pub coverage: f64,
    pub unmatched: Vec<String>,
}

impl CrosswalkOutcome {
    /// Matched target shares rescaled to a valid share table.
    pub fn to_table(&self, source_label: &str) -> Result<ShareTable> {
        ShareTable::from_entries(
            source_label,
            self.shares.iter().map(|(k, v)| (k.clone(), *v)),
            LoadOptions {
                percent: false,
                normalize: true,
            },
        )
    }
}

pub fn apply_crosswalk(table: &ShareTable, xw: &Crosswalk) -> CrosswalkOutcome {
    let mut by_source: BTreeMap<&str, Vec<&CrosswalkEntry>> = BTreeMap::new();
    for e in xw.entries() {
        by_source.entry(e.source.as_str()).or_default().push(e);
    }
    let mut shares: BTreeMap<OccId, f64> = BTreeMap::new();
    let mut matched_mass = 0.0;
    let mut total = 0.0;
    let mut unmatched = Vec::new();
    for (occ, share) in table.iter() {
        total += share;
        match by_source.get(occ.code()) {
            Some(targets) => {
                matched_mass += share;
                for e in targets {
                    *shares.entry(e.target.clone()).or_insert(0.0) += share * e.weight;
                }
            }
            None => unmatched.push(occ.to_string()),
        }
    }
    CrosswalkOutcome {
        shares,
        matched_mass,
        coverage: if total > 0.0 { matched_mass / total } else { 0.0 },
        unmatched,
    }
}

// ---------------------------------------------------------------------------
// Major-group expansion

/// Tables that can be pushed from major groups down to detailed occupations.
pub trait ExpandToDetailed: Sized {
    fn expand_major_to_detailed(&self, reference: &OccOutcomeTable) -> Result<Self>;
}

fn children(reference: &OccOutcomeTable) -> Result<BTreeMap<OccId, Vec<(OccId, f64)>>> {
    let mut out: BTreeMap<OccId, Vec<(OccId, f64)>> = BTreeMap::new();
    for (occ, row) in reference.iter() {
        if occ.level() != Level::Detailed {
            return Err(Error::LevelMismatch("reference weights must be detailed".into()));
        }
        out.entry(occ.parent()).or_default().push((occ.clone(), row.weight));
    }
    Ok(out)
}

impl ExpandToDetailed for ShareTable {
    /// Split each major-group share across its detailed occupations in
    /// proportion to reference employment.
    fn expand_major_to_detailed(&self, reference: &OccOutcomeTable) -> Result<Self> {
        if self.level == Level::Detailed {
            return Ok(self.clone());
        }
        let kids = children(reference)?;
        for parent in kids.keys() {
            if !self.entries.contains_key(parent) {
                return Err(Error::MissingParent(kids[parent][0].0.to_string()));
            }
        }
        let mut entries = BTreeMap::new();
        for (parent, share) in &self.entries {
            let Some(list) = kids.get(parent) else {
                if *share > 0.0 {
                    return Err(Error::schema(
                        &self.source_label,
                        format!("major group `{parent}` has no detailed occupations in the reference weights"),
                    ));
                }
                continue;
            };
            let total: f64 = list.iter().map(|(_, w)| w).sum();
            for (occ, w) in list {
                entries.insert(occ.clone(), share * w / total);
            }
        }
        Ok(ShareTable {
            source_label: self.source_label.clone(),
            level: Level::Detailed,
            entries,
        })
    }
}

impl ExpandToDetailed for OccOutcomeTable {
    /// Copy each major-group score to every detailed child; weights come from
    /// the reference table.
    fn expand_major_to_detailed(&self, reference: &OccOutcomeTable) -> Result<Self> {
        if self.level() == Level::Detailed {
            return Ok(self.clone());
        }
        let kids = children(reference)?;
        let mut rows = BTreeMap::new();
        for (parent, list) in &kids {
            let Some(row) = self.rows.get(parent) else {
                return Err(Error::MissingParent(list[0].0.to_string()));
            };
            for (occ, w) in list {
                rows.insert(
                    occ.clone(),
                    OutcomeRow {
                        value: row.value,
                        weight: *w,
                    },
                );
            }
        }
        Ok(OccOutcomeTable {
            label: self.label.clone(),
            rows,
        })
    }
}
