//! End-to-end baseline versus reweighted comparison driven by one JSON config.
//!
//! Stages run in order: ingest, psi, measure, reweight, standardize, did,
//! bootstrap, xocc, bounds, diagnose, report. Errors carry the stage name.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dgp::{gen_occ_cross_section, gen_panel_for, DGPConfig, PanelDataset, PanelSpec};
use crate::diagnostics::correlation_matrix;
use crate::error::{Error, Result};
use crate::estim::{
    cross_occ_regression, did, did_problem, parse_cluster, prepare, spearman_occ, wild_cluster_bootstrap,
    BootstrapResult, FixedEffectSpec, RegressionFit, DID_TERM, XOCC_TERM,
};
use crate::exposure::{platform_proxy, reweight, selection_for, standardize_with, true_exposure, ExposureVector};
use crate::ident::{bounds, IdentifiedSet};
use crate::ingest::{LoadOptions, OccOutcomeTable, OutcomeRow, ShareTable, TaskMatrix};
use crate::manifest::RunManifest;
use crate::occ::OccId;
use crate::report::{coefficient_csv, coefficient_table, fits_forest_svg, heatmap_svg, FitSummary};
use crate::selection::{skew_metrics, SelectionProfile, SkewMetrics};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticInputs {
    pub dgp: DGPConfig,
    pub panel: PanelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeInput {
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileInputs {
    pub tasks: PathBuf,
    pub platform: PathBuf,
    pub workforce: PathBuf,
    #[serde(default)]
    pub panel: Option<PathBuf>,
    #[serde(default)]
    pub post_years: BTreeSet<i32>,
    /// Occupation-level outcome tables (`occ_code,outcome,weight`).
    #[serde(default)]
    pub outcomes: Vec<OutcomeInput>,
    #[serde(default)]
    pub percent: bool,
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed for proxy noise and the bootstrap; overrides the synthetic DGP seed when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub synthetic: Option<SyntheticInputs>,
    #[serde(default)]
    pub inputs: Option<FileInputs>,
    #[serde(default = "default_fe")]
    pub fe: String,
    #[serde(default = "default_cluster")]
    pub cluster: String,
    #[serde(default)]
    pub bootstrap_replications: usize,
    /// SD of the measurement noise added to the platform proxy.
    #[serde(default)]
    pub noise_sd_u: f64,
    /// Display multiplier for coefficient tables.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_fe() -> String {
    "occ,state,year".into()
}

fn default_cluster() -> String {
    "state".into()
}

fn default_scale() -> f64 {
    100.0
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        match (&cfg.synthetic, &cfg.inputs) {
            (Some(_), None) | (None, Some(_)) => Ok(cfg),
            _ => Err(Error::InvalidArgument(
                "pipeline config needs exactly one of `synthetic` and `inputs`".into(),
            )),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_json(&text)
    }
}

/// One outcome's baseline and reweighted coefficients and the interval between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeBounds {
    pub outcome: String,
    pub design: String,
    pub baseline_se: f64,
    pub reweighted_se: f64,
    pub set: IdentifiedSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub n_occupations: usize,
    /// Occupations with ψ > 0 that enter both measures.
    pub n_support: usize,
    pub zero_psi: Vec<OccId>,
    pub skew: SkewMetrics,
    pub bounds: Vec<OutcomeBounds>,
    pub bootstrap: Vec<BootstrapResult>,
    pub spearman_proxy_reweighted: f64,
    pub spearman_proxy_true: Option<f64>,
    pub spearman_reweighted_true: Option<f64>,
}

struct Loaded {
    tasks: TaskMatrix,
    platform: ShareTable,
    workforce: ShareTable,
    panel: Option<PanelDataset>,
    outcomes: Vec<OccOutcomeTable>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Write the synthetic draw as ordinary input files and return their description.
fn materialize(syn: &SyntheticInputs, seed: Option<u64>, dir: &Path) -> Result<FileInputs> {
    let mut dgp = syn.dgp.clone();
    if let Some(s) = seed {
        dgp.seed = s;
    }
    let cs = gen_occ_cross_section(&dgp)?;
    let draw = cs.to_domain()?;
    let ids: Vec<OccId> = draw.truth.values.keys().cloned().collect();
    let n = ids.len() as f64;
    let workforce = ShareTable::from_entries("workforce", ids.iter().map(|o| (o.clone(), 1.0 / n)), LoadOptions::default())?;
    let total: f64 = cs.psi.iter().sum();
    let platform = ShareTable::from_entries(
        "platform",
        ids.iter().cloned().zip(cs.psi.iter().map(|p| p / total)),
        LoadOptions { percent: false, normalize: true },
    )?;
    let panel = gen_panel_for(&dgp, &syn.panel, 0, &cs.e, Some(&cs.adoption))?;
    let outcome = OccOutcomeTable::from_rows(
        "y",
        ids.iter().cloned().zip(cs.y.iter().map(|&value| OutcomeRow { value, weight: 1.0 })),
    )?;

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = |f: &str| dir.join(f);
    draw.tasks.write(path("tasks.csv"))?;
    platform.write(path("platform.csv"))?;
    workforce.write(path("workforce.csv"))?;
    panel.write(path("panel.csv"))?;
    outcome.write(path("outcome_y.csv"))?;
    Ok(FileInputs {
        tasks: path("tasks.csv"),
        platform: path("platform.csv"),
        workforce: path("workforce.csv"),
        panel: Some(path("panel.csv")),
        post_years: syn.panel.post_years.clone(),
        outcomes: vec![OutcomeInput {
            label: "y".into(),
            path: path("outcome_y.csv"),
        }],
        percent: false,
        normalize: false,
    })
}

fn ingest(inputs: &FileInputs) -> Result<Loaded> {
    let opts = LoadOptions {
        percent: inputs.percent,
        normalize: inputs.normalize,
    };
    let panel = match &inputs.panel {
        Some(p) => {
            if inputs.post_years.is_empty() {
                return Err(Error::InvalidArgument("`post_years` is required with a panel".into()));
            }
            Some(PanelDataset::load(p, inputs.post_years.clone())?)
        }
        None => None,
    };
    if panel.is_none() && inputs.outcomes.is_empty() {
        return Err(Error::InvalidArgument("pipeline needs a panel or at least one outcome table".into()));
    }
    Ok(Loaded {
        tasks: TaskMatrix::load(&inputs.tasks, LoadOptions { percent: false, normalize: inputs.normalize })?,
        platform: ShareTable::load(&inputs.platform, "platform", opts)?,
        workforce: ShareTable::load(&inputs.workforce, "workforce", opts)?,
        panel,
        outcomes: inputs
            .outcomes
            .iter()
            .map(|o| OccOutcomeTable::load(&o.path, &o.label, LoadOptions::default()))
            .collect::<Result<_>>()?,
    })
}

fn restrict(v: &ExposureVector, keep: &BTreeSet<OccId>) -> ExposureVector {
    let mut out = v.clone();
    out.values.retain(|k, _| keep.contains(k));
    out
}

fn spearman_or_none(a: &ExposureVector, b: &ExposureVector) -> Option<f64> {
    spearman_occ(&a.values, &b.values).ok()
}

/// Run the pipeline described by `config_path`, writing everything under `out`.
/// `command` is recorded in the manifest; `seed` overrides the config seed.
pub fn run_pipeline(config_path: &Path, out: &Path, seed: Option<u64>, command: Vec<String>) -> Result<PipelineReport> {
    let cfg = PipelineConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let seed_used = seed.or(cfg.seed);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut manifest = RunManifest::new(command);
    manifest.config(config_path)?;

    let inputs = match (&cfg.synthetic, &cfg.inputs) {
        (Some(syn), _) => materialize(syn, seed_used, &out.join("inputs")).map_err(|e| e.in_stage("simulate"))?,
        (None, Some(files)) => {
            let mut f = files.clone();
            f.tasks = resolve(base, &f.tasks);
            f.platform = resolve(base, &f.platform);
            f.workforce = resolve(base, &f.workforce);
            f.panel = f.panel.map(|p| resolve(base, &p));
            for o in &mut f.outcomes {
                o.path = resolve(base, &o.path);
            }
            let paths = [&f.tasks, &f.platform, &f.workforce]
                .into_iter()
                .chain(&f.panel)
                .chain(f.outcomes.iter().map(|o| &o.path));
            for p in paths {
                manifest.input(p).map_err(|e| e.in_stage("ingest"))?;
            }
            f
        }
        (None, None) => unreachable!("validated in PipelineConfig::from_json"),
    };
    let seed = seed_used.unwrap_or_else(|| cfg.synthetic.as_ref().map_or(0, |s| s.dgp.seed));
    manifest.seeds.push(seed);

    let data = ingest(&inputs).map_err(|e| e.in_stage("ingest"))?;

    let profile: SelectionProfile =
        selection_for(&data.tasks, &data.platform, &data.workforce).map_err(|e| e.in_stage("psi"))?;
    write_text(&out.join("psi.csv"), &profile.psi_csv_string())?;
    let skew = skew_metrics(&profile, None).map_err(|e| e.in_stage("psi"))?;

    let (proxy, truth) = (|| -> Result<_> {
        let proxy = platform_proxy(&data.tasks, &profile, cfg.noise_sd_u, seed)?;
        Ok((proxy, true_exposure(&data.tasks)?))
    })()
    .map_err(|e| e.in_stage("measure"))?;
    proxy.write(out.join("proxy.csv"))?;
    truth.write(out.join("true.csv"))?;

    let zero_psi: Vec<OccId> =
        proxy.values.keys().filter(|k| profile.psi(k).is_some_and(|p| p <= 0.0)).cloned().collect();
    let mut support: BTreeSet<OccId> =
        proxy.values.keys().filter(|k| profile.psi(k).is_some_and(|p| p > 0.0)).cloned().collect();
    if let Some(panel) = &data.panel {
        let present = panel.present_occupations();
        support.retain(|k| present.contains(k));
    }
    let proxy_s = restrict(&proxy, &support);
    let rw = reweight(&proxy_s, &profile).map_err(|e| e.in_stage("reweight"))?;
    rw.write(out.join("reweighted.csv"))?;

    let weights: BTreeMap<OccId, f64> = data.workforce.entries().clone();
    let (proxy_z, rw_z) = (|| -> Result<_> { Ok((standardize_with(&proxy_s, &weights)?, standardize_with(&rw, &weights)?)) })()
        .map_err(|e| e.in_stage("standardize"))?;
    proxy_z.write(out.join("proxy_std.csv"))?;
    rw_z.write(out.join("reweighted_std.csv"))?;

    let fe = FixedEffectSpec::parse(&cfg.fe).map_err(|e| e.in_stage("did"))?;
    let cluster = parse_cluster(&cfg.cluster).map_err(|e| e.in_stage("did"))?;
    let fits_dir = out.join("fits");
    std::fs::create_dir_all(&fits_dir).map_err(|e| Error::io(&fits_dir, e))?;

    let mut outcome_bounds = Vec::new();
    let mut summaries = Vec::new();
    let mut boot = Vec::new();
    let mut record = |outcome: &str, design: &str, term: &str, b: RegressionFit, r: RegressionFit| -> Result<()> {
        let set = bounds(&b, &r, term)?;
        let (bse, rse) = (b.se_of(term)?, r.se_of(term)?);
        for (tag, fit) in [("baseline", b), ("reweighted", r)] {
            let s = FitSummary::from_fit(format!("{outcome}:{tag}"), fit, term, cfg.scale)?;
            s.write(fits_dir.join(format!("{outcome}_{tag}.json")))?;
            summaries.push(s);
        }
        outcome_bounds.push(OutcomeBounds {
            outcome: outcome.to_string(),
            design: design.to_string(),
            baseline_se: bse,
            reweighted_se: rse,
            set,
        });
        Ok(())
    };

    if let Some(panel) = &data.panel {
        let panel = panel.restrict_to(&support);
        let post = &inputs.post_years;
        let (b, r) = rayon::join(
            || did(&panel, &proxy_z, post, &fe, cluster.as_ref()),
            || did(&panel, &rw_z, post, &fe, cluster.as_ref()),
        );
        let (b, r) = (b.map_err(|e| e.in_stage("did"))?, r.map_err(|e| e.in_stage("did"))?);
        if cfg.bootstrap_replications > 0 {
            for (i, v) in [&proxy_z, &rw_z].into_iter().enumerate() {
                let res = (|| -> Result<_> {
                    let pr = prepare(&did_problem(&panel, v, post, &fe, cluster.as_ref())?)?;
                    let term = pr.names.iter().position(|n| n == DID_TERM).expect("focal term present");
                    wild_cluster_bootstrap(&pr, term, 0.0, cfg.bootstrap_replications, 0.95, seed.wrapping_add(i as u64))
                })()
                .map_err(|e| e.in_stage("bootstrap"))?;
                boot.push(res);
            }
        }
        record("panel", "did", DID_TERM, b, r).map_err(|e| e.in_stage("bounds"))?;
    }
    for table in &data.outcomes {
        let b = cross_occ_regression(table, &proxy_s).map_err(|e| e.in_stage("xocc"))?;
        let r = cross_occ_regression(table, &rw).map_err(|e| e.in_stage("xocc"))?;
        record(table.label(), "xocc", XOCC_TERM, b, r).map_err(|e| e.in_stage("bounds"))?;
    }
    write_json(&out.join("bounds.json"), &outcome_bounds)?;
    if !boot.is_empty() {
        write_json(&out.join("bootstrap.json"), &boot)?;
    }

    let truth_s = restrict(&truth, &support);
    let corr = correlation_matrix(&[
        ("proxy".to_string(), proxy_s.values.clone()),
        ("reweighted".to_string(), rw.values.clone()),
        ("true".to_string(), truth_s.values.clone()),
    ])
    .map_err(|e| e.in_stage("diagnose"))?;
    write_text(&out.join("correlations.csv"), &corr.to_csv_string())?;
    write_text(&out.join("correlations.svg"), &heatmap_svg(&corr))?;
    let spearman_proxy_reweighted = spearman_occ(&proxy_s.values, &rw.values).map_err(|e| e.in_stage("diagnose"))?;

    write_text(&out.join("report.txt"), &render_report(&outcome_bounds, &summaries))?;
    write_text(&out.join("coefficients.csv"), &coefficient_csv(&summaries))?;
    write_text(&out.join("fits.svg"), &fits_forest_svg(&summaries).map_err(|e| e.in_stage("report"))?)?;

    let report = PipelineReport {
        seed,
        n_occupations: proxy.len(),
        n_support: support.len(),
        zero_psi,
        skew,
        bounds: outcome_bounds,
        bootstrap: boot,
        spearman_proxy_reweighted,
        spearman_proxy_true: spearman_or_none(&proxy_s, &truth_s),
        spearman_reweighted_true: spearman_or_none(&rw, &truth_s),
    };
    write_json(&out.join(SUMMARY_FILE), &report)?;

    let manifest_path = out.join(MANIFEST_FILE);
    manifest.outputs_in(out, &manifest_path)?;
    manifest.write(&manifest_path)?;
    Ok(report)
}

fn render_report(bounds: &[OutcomeBounds], fits: &[FitSummary]) -> String {
    let mut s = coefficient_table(fits);
    s.push('\n');
    s.push_str("Identified set (magnitudes)\n");
    for b in bounds {
        s.push_str(&format!(
            "{} [{}]: baseline {:.6}, reweighted {:.6}, set [{:.6}, {:.6}], width {:.6}, attenuation share {:.4}{}\n",
            b.outcome,
            b.design,
            b.set.baseline,
            b.set.reweighted,
            b.set.low,
            b.set.high,
            b.set.width,
            b.set.attenuation_share,
            if b.set.same_sign { "" } else { ", sign flip" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_config(sigma: f64, rho: f64) -> String {
        let mut dgp = DGPConfig::new(60, 0.02);
        dgp.psi_dist = if sigma > 0.0 { crate::dgp::PsiDist::unit_lognormal(sigma) } else { crate::dgp::PsiDist::Constant { c: 1.0 } };
        dgp.rho_adoption = rho;
        dgp.noise_sd_eps = 0.05;
        dgp.seed = 11;
        let panel = PanelSpec::new(2019, 2024, 12, 2, [2023, 2024]);
        serde_json::to_string(&serde_json::json!({
            "synthetic": { "dgp": dgp, "panel": panel },
        }))
        .unwrap()
    }

    fn run(text: &str) -> (tempfile::TempDir, Result<PipelineReport>) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("cfg.json");
        std::fs::write(&cfg, text).unwrap();
        let r = run_pipeline(&cfg, &dir.path().join("out"), None, vec!["pipeline".into()]);
        (dir, r)
    }

    #[test]
    fn config_needs_one_source() {
        assert!(PipelineConfig::from_json("{}").is_err());
        assert!(PipelineConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn unit_psi_gives_zero_width() {
        let (_d, r) = run(&synthetic_config(0.0, 0.0));
        let r = r.unwrap();
        for b in &r.bounds {
            assert_eq!(b.set.baseline, b.set.reweighted);
            assert_eq!(b.set.width, 0.0);
        }
    }

    #[test]
    fn skewed_selection_attenuates() {
        let (_d, r) = run(&synthetic_config(0.8, 0.02));
        let r = r.unwrap();
        assert!(r.bounds.iter().all(|b| b.set.attenuation_share > 0.0));
    }

    #[test]
    fn rerun_reproduces_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("cfg.json");
        std::fs::write(&cfg, synthetic_config(0.8, 0.02)).unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        run_pipeline(&cfg, &a, None, vec!["pipeline".into()]).unwrap();
        run_pipeline(&cfg, &b, None, vec!["pipeline".into()]).unwrap();
        let ma = RunManifest::load(a.join(MANIFEST_FILE)).unwrap();
        let mb = RunManifest::load(b.join(MANIFEST_FILE)).unwrap();
        assert!(ma.same_run(&mb));
        assert!(ma.outputs.contains_key("summary.json"));
        assert!(ma.outputs.contains_key("inputs/panel.csv"));
    }

    #[test]
    fn stage_labels_on_errors() {
        let (_d, r) = run(r#"{"inputs": {"tasks": "missing.csv", "platform": "p.csv", "workforce": "w.csv", "outcomes": [{"label": "y", "path": "y.csv"}]}}"#);
        let msg = r.unwrap_err().to_string();
        assert!(msg.starts_with("ingest:"), "{msg}");
    }
}
