//! Command-line front end. `run` parses argv, executes one subcommand and maps
//! errors to exit codes: 0 success, 2 validation, 3 numerical failure.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dgp::{gen_occ_replicate, gen_panel_replicate, CrossSection, DGPConfig, PanelSpec};
use crate::diagnostics::{
    allocate, compare_allocations, correlation_matrix, growth_ratio_cv, l1_shift, quartile_transitions, ranking_gap_test,
    OccAttributes, DEFAULT_GAP_REPLICATIONS,
};
use crate::error::{Error, Result};
use crate::estim::panel::event_term;
use crate::estim::{
    cross_occ_regression, did, did_problem, event_study, parse_cluster, prepare, wild_cluster_bootstrap, FixedEffectSpec,
    DID_TERM, XOCC_TERM,
};
use crate::exposure::{
    composite, composite_per_task, platform_proxy, reweight, selection_for, standardize, standardize_unweighted,
    standardize_with, true_exposure, ExposureVector,
};
use crate::ident::{bounds, plim, span_decomposition, ProjectionStats};
use crate::ingest::{apply_crosswalk, Crosswalk, ExpandToDetailed, LoadOptions, OccOutcomeTable, ShareTable, TaskMatrix};
use crate::manifest::{manifest_path_for, RunManifest};
use crate::occ::{Level, OccId};
use crate::pipeline::run_pipeline;
use crate::report::{coefficient_csv, coefficient_table, fits_forest_svg, gap_forest_svg, heatmap_svg, load_fits, FitSummary};
use crate::rng::SEED_ENV;
use crate::selection::{skew_metrics, SelectionProfile};

#[derive(Debug, Parser)]
#[command(name = "exposure-lens", version, about = "Measurement-error toolkit for platform-derived AI-exposure scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct ShareOpts {
    /// Values are percentages.
    #[arg(long)]
    percent: bool,
    /// Rescale shares that do not sum to one.
    #[arg(long)]
    normalize: bool,
}

impl ShareOpts {
    fn load(&self) -> LoadOptions {
        LoadOptions {
            percent: self.percent,
            normalize: self.normalize,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SeedOpt {
    /// RNG seed; defaults to $EXPOSURE_LENS_SEED, then 0.
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
}

impl SeedOpt {
    fn get(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Clone, Args)]
struct FeOpts {
    /// Absorbed fixed effects, e.g. `occ,state,year` or `occ,state*year`; `none` for none.
    #[arg(long, default_value = "occ,state,year")]
    fe: String,
    /// Cluster dimension, or `none` for heteroskedasticity-robust errors.
    #[arg(long, default_value = "state")]
    cluster: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IngestKind {
    Share,
    Task,
    Outcome,
    Crosswalk,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MeasureKind {
    Proxy,
    True,
    Composite,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LevelArg {
    Detailed,
    Major,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate an input table and optionally write its canonical form.
    Ingest {
        #[arg(long, value_enum)]
        kind: IngestKind,
        #[arg(long)]
        path: PathBuf,
        #[command(flatten)]
        share: ShareOpts,
        /// Map a share table through a `source_code,target_code,weight` crosswalk.
        #[arg(long)]
        crosswalk: Option<PathBuf>,
        /// Expand a major-group table to detailed codes using this outcome table's weights.
        #[arg(long)]
        expand_with: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Selection ratio ψ = platform share / workforce share.
    Psi {
        #[arg(long)]
        platform: PathBuf,
        #[arg(long)]
        workforce: PathBuf,
        /// Employment table for weighted skew metrics.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        share: ShareOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an exposure vector.
    Measure {
        #[arg(long, value_enum, default_value = "proxy")]
        kind: MeasureKind,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        platform: Option<PathBuf>,
        #[arg(long)]
        workforce: Option<PathBuf>,
        /// SD of the additive proxy noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[command(flatten)]
        seed: SeedOpt,
        #[command(flatten)]
        share: ShareOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Divide a proxy by ψ.
    Reweight {
        #[arg(long)]
        proxy: PathBuf,
        #[arg(long)]
        psi: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weighted z-score of an exposure vector.
    Standardize {
        #[arg(long)]
        exposure: PathBuf,
        /// Outcome table whose weights are used.
        #[arg(long, conflicts_with_all = ["shares", "unweighted"])]
        weights: Option<PathBuf>,
        /// Share table used as weights.
        #[arg(long, conflicts_with = "unweighted")]
        shares: Option<PathBuf>,
        #[arg(long)]
        unweighted: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw synthetic cross-sections, and panels when a panel spec is given.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        /// Panel layout JSON; adds one panel per replicate.
        #[arg(long)]
        panel: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedOpt,
        #[arg(long)]
        out: PathBuf,
    },
    /// Difference-in-differences on a person-year panel.
    Did {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        exposure: PathBuf,
        /// Comma-separated post-period years.
        #[arg(long, value_delimiter = ',', required = true)]
        post: Vec<i32>,
        #[command(flatten)]
        fe: FeOpts,
        #[arg(long)]
        label: Option<String>,
        /// Wild cluster bootstrap replications (0 disables).
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        #[command(flatten)]
        seed: SeedOpt,
        #[arg(long)]
        out: PathBuf,
    },
    /// Event study relative to a reference year.
    Eventstudy {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        exposure: PathBuf,
        #[arg(long = "ref")]
        ref_year: i32,
        #[command(flatten)]
        fe: FeOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Occupation-level regression of an outcome on standardized exposure.
    Xocc {
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long)]
        exposure: PathBuf,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interval between baseline and reweighted fits; with several waves, also the span decomposition.
    Bounds {
        #[arg(long, required = true)]
        baseline: Vec<PathBuf>,
        #[arg(long, required = true)]
        reweighted: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probability limit of the proxy coefficient.
    Plim {
        #[arg(long, allow_negative_numbers = true)]
        beta: f64,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measurement diagnostics.
    Diagnose {
        #[command(subcommand)]
        which: Diagnose,
    },
    /// Split a budget by shares and compare against a second share table.
    Allocate {
        #[arg(long)]
        budget: f64,
        #[arg(long)]
        shares: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Occupation attributes (`occ_code,ba_share,wage`) selecting high-wage, high-BA targets.
        #[arg(long, requires = "compare")]
        selector: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        ba_threshold: f64,
        #[command(flatten)]
        share: ShareOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render coefficient tables and a forest plot from fit JSON files.
    Report {
        #[arg(long)]
        fits: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// End-to-end baseline versus reweighted comparison.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        seed: SeedOpt,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum Diagnose {
    /// Spearman correlations between measures.
    Corr {
        /// Exposure (`occ_code,value,role`) or share (`occ_code,share`) file; repeat.
        #[arg(long = "measure", required = true)]
        measures: Vec<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Employment-weighted quartile transitions between two waves.
    Transitions {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// L1 distance between two share tables in percentage points.
    L1 {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value = "major")]
        level: LevelArg,
        #[command(flatten)]
        share: ShareOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coefficient of variation of growth ratios.
    Cv {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Two-digit major group to restrict to.
        #[arg(long)]
        subset: Option<String>,
        #[command(flatten)]
        share: ShareOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap test of ranking-outcome correlation gaps.
    Gap {
        /// Outcome table; repeat.
        #[arg(long = "outcome", required = true)]
        outcomes: Vec<PathBuf>,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GAP_REPLICATIONS)]
        replicates: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.05)]
        q: f64,
        #[command(flatten)]
        seed: SeedOpt,
        #[command(flatten)]
        share: ShareOpts,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parse `argv` (program name first), run the command and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: {first} (see --help)");
            return 2;
        }
    };
    let command: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Outputs of one command and what produced them.
struct Run {
    manifest: RunManifest,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(command: Vec<String>) -> Self {
        Run {
            manifest: RunManifest::new(command),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, p: &Path) -> Result<()> {
        self.manifest.input(p)
    }

    fn seed(&mut self, s: u64) {
        self.manifest.seeds.push(s);
    }

    fn text(&mut self, path: &Path, text: &str) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        self.text(path, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    /// Write `<output>.manifest.json` beside every output.
    fn finish(mut self) -> Result<()> {
        for o in &self.outputs {
            self.manifest.output(o)?;
        }
        for o in &self.outputs {
            self.manifest.write(manifest_path_for(o))?;
        }
        Ok(())
    }

    /// Directory outputs: one `manifest.json` inside `dir`.
    fn finish_dir(mut self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        self.manifest.outputs_in(dir, &path)?;
        self.manifest.write(&path)
    }
}

fn exposure_csv(v: &ExposureVector) -> String {
    v.to_csv_string()
}

fn load_exposure(path: &Path) -> Result<ExposureVector> {
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    ExposureVector::load(path, &label)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Read a measure as an occupation map from either an exposure or a share file.
fn load_measure(path: &Path) -> Result<(String, BTreeMap<OccId, f64>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = String::new();
    BufReader::new(f).read_line(&mut header).map_err(|e| Error::io(path, e))?;
    let label = stem(path);
    if header.trim_start().starts_with("occ_code,share") {
        let t = ShareTable::load(path, &label, LoadOptions { percent: false, normalize: true })?;
        Ok((label, t.entries().clone()))
    } else {
        Ok((label, load_exposure(path)?.values))
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str, kind: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required for --kind {kind}")))
}

fn per_task_path(out: &Path) -> PathBuf {
    let name = format!("{}_per_task.csv", stem(out));
    out.with_file_name(name)
}

fn execute(cmd: Command, argv: Vec<String>) -> Result<()> {
    let mut run = Run::new(argv);
    match cmd {
        Command::Ingest {
            kind,
            path,
            share,
            crosswalk,
            expand_with,
            out,
        } => {
            run.input(&path)?;
            let opts = share.load();
            let label = stem(&path);
            let (summary, canonical) = match kind {
                IngestKind::Share => {
                    let mut t = ShareTable::load(&path, &label, opts)?;
                    let mut extra = String::new();
                    if let Some(xw) = &crosswalk {
                        run.input(xw)?;
                        let mapped = apply_crosswalk(&t, &Crosswalk::load(xw)?);
                        extra = format!(", crosswalk coverage {:.4}, {} unmatched", mapped.coverage, mapped.unmatched.len());
                        t = mapped.to_table(&label)?;
                    }
                    if let Some(r) = &expand_with {
                        run.input(r)?;
                        t = t.expand_major_to_detailed(&OccOutcomeTable::load(r, "reference", LoadOptions::default())?)?;
                    }
                    (format!("share table: {} occupations at {} level{extra}", t.len(), t.level()), t.to_csv_string())
                }
                IngestKind::Task => {
                    let t = TaskMatrix::load(&path, opts)?;
                    (format!("task matrix: {} occupations at {} level", t.len(), t.level()?), t.to_csv_string())
                }
                IngestKind::Outcome => {
                    let mut t = OccOutcomeTable::load(&path, &label, opts)?;
                    if let Some(r) = &expand_with {
                        run.input(r)?;
                        t = t.expand_major_to_detailed(&OccOutcomeTable::load(r, "reference", LoadOptions::default())?)?;
                    }
                    (format!("outcome table: {} occupations at {} level", t.len(), t.level()), t.to_csv_string())
                }
                IngestKind::Crosswalk => {
                    let x = Crosswalk::load(&path)?;
                    (format!("crosswalk: {} entries", x.entries().len()), x.to_csv_string())
                }
            };
            println!("{summary}");
            if let Some(out) = out {
                run.text(&out, &canonical)?;
            }
            run.finish()
        }
        Command::Psi {
            platform,
            workforce,
            weights,
            share,
            out,
        } => {
            run.input(&platform)?;
            run.input(&workforce)?;
            let p = ShareTable::load(&platform, "platform", share.load())?;
            let w = ShareTable::load(&workforce, "workforce", share.load())?;
            let profile = crate::selection::compute_psi(&p, &w)?;
            let weights = match &weights {
                Some(path) => {
                    run.input(path)?;
                    Some(OccOutcomeTable::load(path, "employment", LoadOptions::default())?)
                }
                None => None,
            };
            run.text(&out, &profile.psi_csv_string())?;
            match skew_metrics(&profile, weights.as_ref()) {
                Ok(s) => {
                    let path = out.with_file_name(format!("{}_skew.json", stem(&out)));
                    run.json(&path, &s)?;
                    println!(
                        "{} occupations; var psi {:.4}, sd log psi {:.4}, max/min {:.2}",
                        s.n, s.var_psi, s.sd_log_psi, s.max_min_ratio
                    );
                }
                Err(e) => eprintln!("note: skew metrics skipped: {e}"),
            }
            run.finish()
        }
        Command::Measure {
            kind,
            tasks,
            platform,
            workforce,
            noise,
            seed,
            share,
            out,
        } => {
            run.input(&tasks)?;
            let t = TaskMatrix::load(&tasks, LoadOptions { percent: false, normalize: share.normalize })?;
            let tables = |run: &mut Run, kind: &str| -> Result<(ShareTable, ShareTable)> {
                let p = require(&platform, "platform", kind)?;
                let w = require(&workforce, "workforce", kind)?;
                run.input(p)?;
                run.input(w)?;
                Ok((
                    ShareTable::load(p, "platform", share.load())?,
                    ShareTable::load(w, "workforce", share.load())?,
                ))
            };
            match kind {
                MeasureKind::True => run.text(&out, &exposure_csv(&true_exposure(&t)?))?,
                MeasureKind::Proxy => {
                    let (p, w) = tables(&mut run, "proxy")?;
                    let profile = selection_for(&t, &p, &w)?;
                    run.seed(seed.get());
                    run.text(&out, &exposure_csv(&platform_proxy(&t, &profile, noise, seed.get())?))?;
                }
                MeasureKind::Composite => {
                    let (p, w) = tables(&mut run, "composite")?;
                    run.text(&out, &exposure_csv(&composite(&t, &p, &w)?))?;
                    run.text(&per_task_path(&out), &exposure_csv(&composite_per_task(&t, &p, &w)?))?;
                }
            }
            run.finish()
        }
        Command::Reweight { proxy, psi, out } => {
            run.input(&proxy)?;
            run.input(&psi)?;
            let v = load_exposure(&proxy)?;
            let profile = SelectionProfile::load_psi(&psi)?;
            run.text(&out, &exposure_csv(&reweight(&v, &profile)?))?;
            run.finish()
        }
        Command::Standardize {
            exposure,
            weights,
            shares,
            unweighted,
            out,
        } => {
            run.input(&exposure)?;
            let v = load_exposure(&exposure)?;
            let z = match (weights, shares) {
                (Some(w), _) => {
                    run.input(&w)?;
                    standardize(&v, &OccOutcomeTable::load(&w, "weights", LoadOptions::default())?)?
                }
                (None, Some(s)) => {
                    run.input(&s)?;
                    let t = ShareTable::load(&s, "weights", LoadOptions { percent: false, normalize: true })?;
                    standardize_with(&v, t.entries())?
                }
                (None, None) if unweighted => standardize_unweighted(&v)?,
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "pass --weights, --shares or --unweighted".into(),
                    ))
                }
            };
            run.text(&out, &exposure_csv(&z))?;
            run.finish()
        }
        Command::Simulate {
            config,
            replicates,
            panel,
            seed,
            out,
        } => {
            if replicates == 0 {
                return Err(Error::InvalidArgument("--replicates must be at least 1".into()));
            }
            run.manifest.config(&config)?;
            let mut cfg = DGPConfig::load(&config)?;
            if let Some(s) = seed.seed {
                cfg.seed = s;
            }
            run.seed(cfg.seed);
            let spec = match &panel {
                Some(p) => {
                    run.input(p)?;
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    Some(serde_json::from_str::<PanelSpec>(&text)?)
                }
                None => None,
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for r in 0..replicates {
                let cs = gen_occ_replicate(&cfg, r)?;
                run.text(&out.join(format!("replicate_{r:04}.csv")), &cross_section_csv(&cs)?)?;
                if let Some(spec) = &spec {
                    let p = gen_panel_replicate(&cfg, spec, r)?;
                    run.text(&out.join(format!("panel_{r:04}.csv")), &p.to_csv_string())?;
                    if let Some(e) = &p.exposure {
                        run.text(&out.join(format!("exposure_{r:04}.csv")), &exposure_csv(e))?;
                    }
                }
            }
            println!("wrote {replicates} replicate(s) to {}", out.display());
            run.finish_dir(&out)
        }
        Command::Did {
            panel,
            exposure,
            post,
            fe,
            label,
            bootstrap,
            seed,
            out,
        } => {
            run.input(&panel)?;
            run.input(&exposure)?;
            let post: BTreeSet<i32> = post.into_iter().collect();
            let data = crate::dgp::PanelDataset::load(&panel, post.clone())?;
            let v = load_exposure(&exposure)?;
            let spec = FixedEffectSpec::parse(&fe.fe)?;
            let cluster = parse_cluster(&fe.cluster)?;
            let fit = did(&data, &v, &post, &spec, cluster.as_ref())?;
            let summary = FitSummary::from_fit(label.unwrap_or_else(|| stem(&exposure)), fit, DID_TERM, 100.0)?;
            println!("{DID_TERM}: {:.6} (se {:.6}, p {:.4})", summary.coef, summary.se, summary.p);
            run.json(&out, &summary)?;
            if bootstrap > 0 {
                let pr = prepare(&did_problem(&data, &v, &post, &spec, cluster.as_ref())?)?;
                let term = pr.names.iter().position(|n| n == DID_TERM).expect("focal term present");
                run.seed(seed.get());
                let b = wild_cluster_bootstrap(&pr, term, 0.0, bootstrap, 0.95, seed.get())?;
                println!("wild cluster bootstrap: p {:.4}, 95% CI [{:.6}, {:.6}]", b.p, b.ci_low, b.ci_high);
                run.json(&out.with_file_name(format!("{}_bootstrap.json", stem(&out))), &b)?;
            }
            run.finish()
        }
        Command::Eventstudy {
            panel,
            exposure,
            ref_year,
            fe,
            out,
        } => {
            run.input(&panel)?;
            run.input(&exposure)?;
            let data = crate::dgp::PanelDataset::load(&panel, BTreeSet::new())?;
            let v = load_exposure(&exposure)?;
            let fit = event_study(&data, &v, ref_year, &FixedEffectSpec::parse(&fe.fe)?, parse_cluster(&fe.cluster)?.as_ref())?;
            for (y, c) in fit.years.iter().zip(&fit.coef) {
                let name = if *y == ref_year { format!("{} (ref)", event_term(*y)) } else { event_term(*y) };
                println!("{name}: {c:.6}");
            }
            println!("pre-trend F({}, {}) = {:.4}, p {:.4}", fit.pre_df1, fit.pre_df2, fit.pre_f, fit.pre_p);
            run.json(&out, &fit)?;
            run.finish()
        }
        Command::Xocc {
            outcomes,
            exposure,
            label,
            out,
        } => {
            run.input(&outcomes)?;
            run.input(&exposure)?;
            let table = OccOutcomeTable::load(&outcomes, &stem(&outcomes), LoadOptions::default())?;
            let v = load_exposure(&exposure)?;
            let fit = cross_occ_regression(&table, &v)?;
            let summary = FitSummary::from_fit(label.unwrap_or_else(|| stem(&exposure)), fit, XOCC_TERM, 1.0)?;
            println!("{XOCC_TERM}: {:.6} (se {:.6}, p {:.4})", summary.coef, summary.se, summary.p);
            run.json(&out, &summary)?;
            run.finish()
        }
        Command::Bounds { baseline, reweighted, out } => {
            if baseline.len() != reweighted.len() {
                return Err(Error::InvalidArgument("pass the same number of --baseline and --reweighted fits".into()));
            }
            let mut b = Vec::new();
            let mut r = Vec::new();
            for p in baseline.iter().chain(&reweighted) {
                run.input(p)?;
            }
            for p in &baseline {
                b.push(FitSummary::load(p)?);
            }
            for p in &reweighted {
                r.push(FitSummary::load(p)?);
            }
            let sets = b
                .iter()
                .zip(&r)
                .map(|(b, r)| {
                    if b.term != r.term {
                        return Err(Error::InvalidArgument(format!("terms differ: `{}` vs `{}`", b.term, r.term)));
                    }
                    bounds(&b.fit, &r.fit, &b.term)
                })
                .collect::<Result<Vec<_>>>()?;
            for s in &sets {
                println!(
                    "[{:.6}, {:.6}] width {:.6}, attenuation share {:.4}",
                    s.low, s.high, s.width, s.attenuation_share
                );
            }
            if sets.len() == 1 {
                run.json(&out, &sets[0])?;
            } else {
                let bf: Vec<_> = b.iter().map(|f| f.fit.clone()).collect();
                let rf: Vec<_> = r.iter().map(|f| f.fit.clone()).collect();
                let span = span_decomposition(&bf, &rf, &b[0].term)?;
                println!("span ratio {:.4}, closure {:.4}", span.span_ratio, span.closure);
                run.json(&out, &serde_json::json!({ "sets": sets, "span": span }))?;
            }
            run.finish()
        }
        Command::Plim { beta, lambda, kappa, out } => {
            let stats = ProjectionStats::from_lambda_kappa(lambda, kappa)?;
            let value = plim(beta, &stats)?;
            println!("{value}");
            if let Some(out) = out {
                run.json(&out, &serde_json::json!({ "beta": beta, "lambda": lambda, "kappa": kappa, "plim": value }))?;
            }
            run.finish()
        }
        Command::Diagnose { which } => diagnose(which, run),
        Command::Allocate {
            budget,
            shares,
            compare,
            selector,
            ba_threshold,
            share,
            out,
        } => {
            run.input(&shares)?;
            let a = allocate(budget, &ShareTable::load(&shares, "a", share.load())?)?;
            let b = match &compare {
                Some(p) => {
                    run.input(p)?;
                    Some(allocate(budget, &ShareTable::load(p, "b", share.load())?)?)
                }
                None => None,
            };
            let keys: BTreeSet<&OccId> = a.keys().chain(b.iter().flat_map(|m| m.keys())).collect();
            let mut csv = String::from(if b.is_some() { "occ_code,amount,compare_amount\n" } else { "occ_code,amount\n" });
            for k in keys {
                let x = a.get(k).copied().unwrap_or(0.0);
                match &b {
                    Some(b) => csv.push_str(&format!("{k},{x},{}\n", b.get(k).copied().unwrap_or(0.0))),
                    None => csv.push_str(&format!("{k},{x}\n")),
                }
            }
            run.text(&out, &csv)?;
            if let (Some(b), Some(sel)) = (&b, &selector) {
                run.input(sel)?;
                let targets = OccAttributes::load(sel)?.high_wage_high_ba(ba_threshold);
                let cmp = compare_allocations(&a, b, |k| targets.contains(k))?;
                println!(
                    "shifted {:.0} ({:.2}% of budget) across {} selected occupations",
                    cmp.shifted_amount,
                    100.0 * cmp.shifted_share,
                    cmp.selected.len()
                );
                run.json(&out.with_file_name(format!("{}_comparison.json", stem(&out))), &cmp)?;
            }
            run.finish()
        }
        Command::Report { fits, out } => {
            let list = load_fits(&fits)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let table = coefficient_table(&list);
            print!("{table}");
            run.text(&out.join("coefficients.txt"), &table)?;
            run.text(&out.join("coefficients.csv"), &coefficient_csv(&list))?;
            run.text(&out.join("forest.svg"), &fits_forest_svg(&list)?)?;
            for f in std::fs::read_dir(&fits).map_err(|e| Error::io(&fits, e))? {
                let p = f.map_err(|e| Error::io(&fits, e))?.path();
                let name = p.to_string_lossy();
                if name.ends_with(".json") && !name.ends_with(".manifest.json") {
                    run.input(&p)?;
                }
            }
            run.finish_dir(&out)
        }
        Command::Pipeline { config, seed, out } => {
            let report = run_pipeline(&config, &out, seed.seed, run.manifest.command.clone())?;
            for b in &report.bounds {
                println!(
                    "{} [{}]: baseline {:.6}, reweighted {:.6}, attenuation share {:.4}",
                    b.outcome, b.design, b.set.baseline, b.set.reweighted, b.set.attenuation_share
                );
            }
            Ok(())
        }
    }
}

fn diagnose(which: Diagnose, mut run: Run) -> Result<()> {
    match which {
        Diagnose::Corr { measures, svg, out } => {
            let mut list = Vec::new();
            for p in &measures {
                run.input(p)?;
                list.push(load_measure(p)?);
            }
            let m = correlation_matrix(&list)?;
            run.text(&out, &m.to_csv_string())?;
            if let Some(svg) = svg {
                run.text(&svg, &heatmap_svg(&m))?;
            }
        }
        Diagnose::Transitions { a, b, weights, out } => {
            for p in [&a, &b, &weights] {
                run.input(p)?;
            }
            let (_, va) = load_measure(&a)?;
            let (_, vb) = load_measure(&b)?;
            let w = OccOutcomeTable::load(&weights, "employment", LoadOptions::default())?;
            let t = quartile_transitions(&va, &vb, &w)?;
            println!(
                "n {}: same quartile {:.4}, one move {:.4}, two or more {:.4}",
                t.n, t.same_quartile, t.one_move, t.two_plus_move
            );
            run.text(&out, &t.to_csv_string())?;
        }
        Diagnose::L1 { a, b, level, share, out } => {
            run.input(&a)?;
            run.input(&b)?;
            let ta = ShareTable::load(&a, "a", share.load())?;
            let tb = ShareTable::load(&b, "b", share.load())?;
            let level = match level {
                LevelArg::Detailed => Level::Detailed,
                LevelArg::Major => Level::MajorGroup,
            };
            let d = l1_shift(&ta, &tb, level)?;
            println!("{d}");
            run.json(&out, &serde_json::json!({ "level": level.to_string(), "l1_pp": d }))?;
        }
        Diagnose::Cv { a, b, subset, share, out } => {
            run.input(&a)?;
            run.input(&b)?;
            let ta = ShareTable::load(&a, "a", share.load())?;
            let tb = ShareTable::load(&b, "b", share.load())?;
            let g = growth_ratio_cv(&ta, &tb, subset.as_deref())?;
            println!("n {}: mean ratio {:.4}, cv {:.4}", g.n, g.mean_ratio, g.cv);
            run.json(&out, &g)?;
        }
        Diagnose::Gap {
            outcomes,
            a,
            b,
            replicates,
            alpha,
            q,
            seed,
            share,
            svg,
            out,
        } => {
            let mut tables = Vec::new();
            for p in &outcomes {
                run.input(p)?;
                tables.push(OccOutcomeTable::load(p, &stem(p), LoadOptions::default())?);
            }
            run.input(&a)?;
            run.input(&b)?;
            let ta = ShareTable::load(&a, "a", share.load())?;
            let tb = ShareTable::load(&b, "b", share.load())?;
            run.seed(seed.get());
            let g = ranking_gap_test(&tables, &ta, &tb, replicates, seed.get(), alpha, q)?;
            run.text(&out, &g.to_csv_string())?;
            if let Some(svg) = svg {
                run.text(&svg, &gap_forest_svg(&g))?;
            }
        }
    }
    run.finish()
}

fn cross_section_csv(cs: &CrossSection) -> Result<String> {
    let mut out = String::from("occ_code,e,psi,q_p,eta,u,e_p,adoption,y\n");
    for i in 0..cs.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            crate::dgp::synthetic_occ(i)?,
            cs.e[i],
            cs.psi[i],
            cs.q_p[i],
            cs.eta[i],
            cs.u[i],
            cs.e_p[i],
            cs.adoption[i],
            cs.y[i]
        ));
    }
    Ok(out)
}
