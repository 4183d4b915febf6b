//! Command-line front end: `fit`, `simulate` and `bootstrap`.
//!
//! Configuration is JSON; results are JSON documents that embed the resolved
//! configuration and the tool version, with tables and curves as CSV.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cohort::{load_cohort_files, write_cohort_files, Cohort, HistoryFeatureSpec};
use crate::error::{Error, Result};
use crate::eventfit::{fit_locf, fit_ppl, fit_proposed, LocfOptions, RateModelFit};
use crate::inference::{bootstrap, BootstrapResult};
use crate::simlab::{generate_cohort, run_scenario, scenario_preset, write_summary_csv, ScenarioConfig, SimMethod};
use crate::smoothing::{Bandwidth, KernelConfig};
use crate::solver::SolverConfig;
use crate::vnarfit::{fit_disjoint, DisjointFit, DisjointPartition};

pub const TOOL_NAME: &str = "recurvis";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisMethod {
    #[default]
    Proposed,
    Ppl,
    Locf,
    Disjoint,
}

/// Analysis settings for `fit` and `bootstrap`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub method: AnalysisMethod,
    /// Covariates of the event model. For `disjoint`, taken from the partition when empty.
    pub event_covariates: Vec<String>,
    /// Features of the visit model (proposed method only).
    pub history_rules: HistoryFeatureSpec,
    pub kernel: KernelConfig,
    pub tau: Option<f64>,
    pub disjoint_partition: Option<DisjointPartition>,
    pub locf: LocfOptions,
    pub bootstrap_b: Option<usize>,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Points of the baseline visit-rate grid.
    pub curve_points: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            method: AnalysisMethod::default(),
            event_covariates: Vec::new(),
            history_rules: HistoryFeatureSpec::empty(),
            kernel: KernelConfig::default(),
            tau: None,
            disjoint_partition: None,
            locf: LocfOptions::default(),
            bootstrap_b: None,
            seed: 1,
            solver: SolverConfig::default(),
            curve_points: 101,
        }
    }
}

impl AnalysisConfig {
    /// Method-specific checks and name resolution, before any fitting.
    pub fn validate(&self, cohort: &Cohort) -> Result<()> {
        self.kernel.validate()?;
        self.solver.validate()?;
        if self.curve_points < 2 {
            return Err(Error::InvalidConfig("curve_points must be at least 2".into()));
        }
        if let Some(b) = self.bootstrap_b {
            if b < 2 {
                return Err(Error::InvalidConfig(format!(
                    "bootstrap needs at least 2 replicates, got {b}"
                )));
            }
        }
        match self.method {
            AnalysisMethod::Disjoint => {
                let partition = self.disjoint_partition.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("method `disjoint` requires `disjoint_partition`".into())
                })?;
                partition.validate(cohort)?;
                if !self.event_covariates.is_empty() && self.event_covariates != partition.z_names {
                    return Err(Error::InvalidConfig(
                        "event_covariates must match disjoint_partition.z_names".into(),
                    ));
                }
            }
            method => {
                if self.event_covariates.is_empty() {
                    return Err(Error::InvalidConfig("event_covariates must not be empty".into()));
                }
                cohort.registry().slots(&self.event_covariates)?;
                if method == AnalysisMethod::Proposed {
                    self.history_rules.bind(cohort.registry())?;
                }
                if self.disjoint_partition.is_some() {
                    return Err(Error::InvalidConfig(
                        "disjoint_partition is only used by method `disjoint`".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        match (&self.method, &self.disjoint_partition) {
            (AnalysisMethod::Disjoint, Some(p)) => p
                .z_names
                .iter()
                .chain(&p.w_names)
                .cloned()
                .collect(),
            _ => self.event_covariates.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum FitOutput {
    Rate(RateModelFit),
    Disjoint(DisjointFit),
}

impl FitOutput {
    /// Coefficients in report order (`beta`, then `theta` for the disjoint fit).
    pub fn estimate(&self) -> Vec<f64> {
        match self {
            FitOutput::Rate(f) => f.beta_hat.clone(),
            FitOutput::Disjoint(f) => f.beta_hat.iter().chain(&f.theta_hat).copied().collect(),
        }
    }
}

/// Runs the configured estimator on a cohort.
pub fn fit_with_config(cohort: &Cohort, config: &AnalysisConfig) -> Result<FitOutput> {
    let z = &config.event_covariates;
    Ok(match config.method {
        AnalysisMethod::Proposed => {
            let mut fit = fit_proposed(cohort, z, &config.history_rules, &config.kernel, &config.solver)?;
            if let (Some(vf), Some(h)) = (fit.visit_fit.as_mut(), fit.bandwidth) {
                vf.fill_baseline_grid(h, cohort.tau(), config.curve_points);
            }
            FitOutput::Rate(fit)
        }
        AnalysisMethod::Ppl => FitOutput::Rate(fit_ppl(cohort, z, &config.kernel, &config.solver)?),
        AnalysisMethod::Locf => FitOutput::Rate(fit_locf(cohort, z, &config.locf, &config.solver)?),
        AnalysisMethod::Disjoint => {
            let partition = config
                .disjoint_partition
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("method `disjoint` requires `disjoint_partition`".into()))?;
            FitOutput::Disjoint(fit_disjoint(cohort, partition, &config.kernel, &config.solver)?)
        }
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DataSummary {
    pub subjects: usize,
    pub event_visits: usize,
    pub nonevent_visits: usize,
    pub tau: f64,
}

impl DataSummary {
    fn of(cohort: &Cohort) -> Self {
        Self {
            subjects: cohort.n(),
            event_visits: cohort.event_count(),
            nonevent_visits: cohort.nonevent_count(),
            tau: cohort.tau(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BootstrapSummary {
    pub b: usize,
    pub seed: u64,
    pub coefficient_names: Vec<String>,
    pub se: Vec<f64>,
    pub ci_normal: Vec<(f64, f64)>,
    pub ci_percentile: Vec<(f64, f64)>,
    pub n_failed: usize,
}

impl BootstrapSummary {
    fn new(res: &BootstrapResult, b: usize, seed: u64, names: Vec<String>) -> Self {
        Self {
            b,
            seed,
            coefficient_names: names,
            se: res.se.clone(),
            ci_normal: res.ci_normal.clone(),
            ci_percentile: res.ci_percentile.clone(),
            n_failed: res.n_failed,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitDocument {
    pub tool: &'static str,
    pub version: &'static str,
    /// Seconds since the Unix epoch; the only field that varies between runs.
    pub timestamp: u64,
    pub config: AnalysisConfig,
    pub data: DataSummary,
    pub fit: FitOutput,
    pub bootstrap: Option<BootstrapSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BootstrapDocument {
    pub tool: &'static str,
    pub version: &'static str,
    pub timestamp: u64,
    pub config: AnalysisConfig,
    pub data: DataSummary,
    pub summary: BootstrapSummary,
    pub result: BootstrapResult,
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Applies the horizon from the config and records the one actually used.
fn prepare(cohort: Cohort, config: &mut AnalysisConfig) -> Result<Cohort> {
    let cohort = match config.tau {
        Some(tau) => cohort.with_tau(tau)?,
        None => cohort,
    };
    config.tau = Some(cohort.tau());
    if config.method == AnalysisMethod::Disjoint && config.event_covariates.is_empty() {
        if let Some(p) = &config.disjoint_partition {
            config.event_covariates = p.z_names.clone();
        }
    }
    config.validate(&cohort)?;
    Ok(cohort)
}

/// `fit`: estimates, optional bootstrap summary, curves.
pub fn fit_document(cohort: Cohort, mut config: AnalysisConfig) -> Result<FitDocument> {
    let cohort = prepare(cohort, &mut config)?;
    let fit = fit_with_config(&cohort, &config)?;
    let bootstrap_summary = match config.bootstrap_b {
        Some(b) => {
            let res = bootstrap(&cohort, |c: &Cohort| Ok(fit_with_config(c, &config)?.estimate()), b, config.seed)?;
            Some(BootstrapSummary::new(&res, b, config.seed, config.coefficient_names()))
        }
        None => None,
    };
    Ok(FitDocument {
        tool: TOOL_NAME,
        version: VERSION,
        timestamp: timestamp(),
        data: DataSummary::of(&cohort),
        config,
        fit,
        bootstrap: bootstrap_summary,
    })
}

/// `bootstrap`: the full replicate matrix and its summary.
pub fn bootstrap_document(cohort: Cohort, mut config: AnalysisConfig, b: usize) -> Result<BootstrapDocument> {
    config.bootstrap_b = Some(b);
    let cohort = prepare(cohort, &mut config)?;
    let result = bootstrap(&cohort, |c: &Cohort| Ok(fit_with_config(c, &config)?.estimate()), b, config.seed)?;
    Ok(BootstrapDocument {
        tool: TOOL_NAME,
        version: VERSION,
        timestamp: timestamp(),
        data: DataSummary::of(&cohort),
        summary: BootstrapSummary::new(&result, b, config.seed, config.coefficient_names()),
        config,
        result,
    })
}

/// Replicate matrix as CSV: one row per replicate, empty cells for failures.
pub fn write_replicates_csv<W: Write>(result: &BootstrapResult, names: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["replicate".to_string()];
    header.extend(names.iter().cloned());
    header.push("failure".into());
    w.write_record(&header)?;
    for r in &result.replicates {
        let mut row = vec![r.index.to_string()];
        match &r.estimate {
            Some(e) => row.extend(e.iter().map(|v| v.to_string())),
            None => row.extend(names.iter().map(|_| String::new())),
        }
        row.push(r.failure.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_pairs_csv(path: &Path, header: [&str; 2], pairs: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (a, b) in pairs {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Baseline curves of a fit as CSV files in `dir`.
pub fn write_curves(fit: &FitOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if let FitOutput::Rate(f) = fit {
        let path = dir.join("baseline_cumulative.csv");
        write_pairs_csv(&path, ["t", "cumulative_rate"], &f.baseline_cumulative)?;
        written.push(path);
        if let Some(vf) = &f.visit_fit {
            let path = dir.join("baseline_visit_rate.csv");
            write_pairs_csv(&path, ["t", "visit_rate"], &vf.baseline_grid)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, value)?;
            writeln!(lock)?;
        }
    }
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "recurvis", version, about = "Recurrent-event rate models with informative visit times")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a rate model to a cohort.
    Fit(DataArgs),
    /// Run a simulation scenario and write a summary table.
    Simulate(SimulateArgs),
    /// Bootstrap a fit and dump the replicate matrix.
    Bootstrap(BootstrapArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data_subjects: PathBuf,
    #[arg(long)]
    pub data_visits: PathBuf,
    /// Analysis configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<AnalysisMethod>,
    /// Event covariates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long = "bootstrap-B")]
    pub bootstrap_b: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Result document path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for baseline curve CSVs.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long)]
    pub bandwidth_c: Option<f64>,
    #[arg(long)]
    pub bandwidth_nu: Option<f64>,
    #[arg(long)]
    pub fixed_h: Option<f64>,
}

impl KernelArgs {
    fn apply(&self, kernel: &mut KernelConfig) -> Result<()> {
        if let Some(h) = self.fixed_h {
            if self.bandwidth_c.is_some() || self.bandwidth_nu.is_some() {
                return Err(Error::InvalidConfig(
                    "--fixed-h cannot be combined with --bandwidth-c or --bandwidth-nu".into(),
                ));
            }
            kernel.bandwidth = Bandwidth::Fixed { h };
        } else if self.bandwidth_c.is_some() || self.bandwidth_nu.is_some() {
            let (c0, nu0) = match kernel.bandwidth {
                Bandwidth::Rule { c, nu } => (c, nu),
                Bandwidth::Fixed { .. } => match KernelConfig::default().bandwidth {
                    Bandwidth::Rule { c, nu } => (c, nu),
                    Bandwidth::Fixed { .. } => unreachable!("default bandwidth is a rule"),
                },
            };
            kernel.bandwidth = Bandwidth::Rule {
                c: self.bandwidth_c.unwrap_or(c0),
                nu: self.bandwidth_nu.unwrap_or(nu0),
            };
        }
        kernel.validate()
    }
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// CSV dump of the replicate matrix.
    #[arg(long)]
    pub replicates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Preset name: I..X, GammaShift or Disjoint.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Full scenario configuration (JSON); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "bootstrap-B")]
    pub bootstrap_b: Option<usize>,
    /// Methods, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "proposed,ppl,locf")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Summary CSV path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write replicate `k`'s cohort to `--dump-dir` in the cohort CSV schema.
    #[arg(long, requires = "dump_dir")]
    pub dump_rep: Option<usize>,
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
}

fn load_config(data: &DataArgs) -> Result<AnalysisConfig> {
    let mut config: AnalysisConfig = match &data.config {
        Some(path) => serde_json::from_reader(std::io::BufReader::new(File::open(path)?))
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?,
        None => AnalysisConfig::default(),
    };
    if let Some(m) = data.method {
        config.method = m;
    }
    if let Some(c) = &data.covariates {
        config.event_covariates = c.clone();
    }
    data.kernel.apply(&mut config.kernel)?;
    if data.tau.is_some() {
        config.tau = data.tau;
    }
    if data.bootstrap_b.is_some() {
        config.bootstrap_b = data.bootstrap_b;
    }
    if let Some(s) = data.seed {
        config.seed = s;
    }
    Ok(config)
}

fn cmd_fit(args: &DataArgs) -> Result<()> {
    let config = load_config(args)?;
    let cohort = load_cohort_files(&args.data_subjects, &args.data_visits, None)?;
    let doc = fit_document(cohort, config)?;
    if let Some(dir) = &args.curves {
        write_curves(&doc.fit, dir)?;
    }
    write_json(&doc, args.out.as_deref())
}

fn cmd_bootstrap(args: &BootstrapArgs) -> Result<()> {
    let config = load_config(&args.data)?;
    let b = config.bootstrap_b.unwrap_or(100);
    let cohort = load_cohort_files(&args.data.data_subjects, &args.data.data_visits, None)?;
    let doc = bootstrap_document(cohort, config, b)?;
    if let Some(path) = &args.replicates {
        write_replicates_csv(&doc.result, &doc.summary.coefficient_names, BufWriter::new(File::create(path)?))?;
    }
    write_json(&doc, args.data.out.as_deref())
}

/// Scenario configuration from a preset or file plus flag overrides.
pub fn scenario_from_args(args: &SimulateArgs) -> Result<ScenarioConfig> {
    let mut config = match (&args.config, &args.scenario) {
        (Some(path), _) => serde_json::from_reader(std::io::BufReader::new(File::open(path)?))
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?,
        (None, Some(name)) => scenario_preset(name)?,
        (None, None) => return Err(Error::InvalidConfig("either --scenario or --config is required".into())),
    };
    if let Some(n) = args.n {
        config.n = n;
    }
    if let Some(r) = args.reps {
        config.reps = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.tau.is_some() {
        config.tau = args.tau;
    }
    args.kernel.apply(&mut config.kernel)?;
    config.validate()?;
    Ok(config)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let config = scenario_from_args(args)?;
    let methods = args
        .methods
        .iter()
        .map(|m| SimMethod::parse(m.trim()))
        .collect::<Result<Vec<_>>>()?;
    if let (Some(rep), Some(dir)) = (args.dump_rep, &args.dump_dir) {
        std::fs::create_dir_all(dir)?;
        let sim = generate_cohort(&config, rep)?;
        write_cohort_files(&sim.cohort, dir.join("subjects.csv"), dir.join("visits.csv"))?;
    }
    let run = run_scenario(&config, &methods, args.bootstrap_b)?;
    match &args.out {
        Some(path) => write_summary_csv(&run.rows, BufWriter::new(File::create(path)?)),
        None => write_summary_csv(&run.rows, std::io::stdout().lock()),
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

fn dispatch(cli: &Cli) -> Result<()> {
    let run = || match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
    };
    match cli.threads {
        Some(0) => Err(Error::InvalidConfig("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Parses arguments, runs the command and returns the process exit status.
/// Errors are reported on stderr as a JSON object.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let report = ErrorReport {
                error: e.kind(),
                message: e.to_string(),
                exit_code: e.exit_code(),
            };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| e.to_string()));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::load_cohort;

    const SUBJECTS: &str = "subject_id,censor_time,age\na,3,0.4\nb,2.5,-0.1\n";
    const VISITS: &str = "subject_id,time,kind,crp\n\
        a,0.5,nonevent,1.2\na,1.0,event,2.0\na,1.5,nonevent,0.7\na,2.2,event,1.1\n\
        b,0.4,nonevent,0.3\nb,0.9,nonevent,1.9\nb,1.3,event,0.8\nb,2.0,nonevent,1.5\n";

    fn fixture() -> Cohort {
        load_cohort(SUBJECTS.as_bytes(), VISITS.as_bytes(), None).unwrap()
    }

    #[test]
    fn ppl_fixture_smoke() {
        let config = AnalysisConfig {
            method: AnalysisMethod::Ppl,
            event_covariates: vec!["crp".into()],
            kernel: KernelConfig::fixed(1.5),
            ..AnalysisConfig::default()
        };
        let doc = fit_document(fixture(), config).unwrap();
        let json = serde_json::to_value(&doc).unwrap();
        assert_eq!(json["fit"]["beta_hat"].as_array().unwrap().len(), 1);
        assert!(json["fit"]["score_norm"].as_f64().unwrap() < 1e-8);
        assert_eq!(json["version"], VERSION);
        assert_eq!(json["config"]["tau"], 3.0);
    }

    #[test]
    fn overlapping_disjoint_partition_fails_validation() {
        let config = AnalysisConfig {
            method: AnalysisMethod::Disjoint,
            disjoint_partition: Some(DisjointPartition::new(vec!["crp".into()], vec!["crp".into()])),
            ..AnalysisConfig::default()
        };
        let err = fit_document(fixture(), config).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn config_rejects_unknown_fields_and_missing_covariates() {
        assert!(serde_json::from_str::<AnalysisConfig>(r#"{"methd": "ppl"}"#).is_err());
        let config: AnalysisConfig = serde_json::from_str(r#"{"method": "locf"}"#).unwrap();
        assert!(config.validate(&fixture()).is_err());
        let config: AnalysisConfig =
            serde_json::from_str(r#"{"method": "ppl", "event_covariates": ["nope"]}"#).unwrap();
        assert!(matches!(config.validate(&fixture()), Err(Error::UnknownCovariate(_))));
    }

    #[test]
    fn kernel_flags() {
        let mut k = KernelConfig::default();
        KernelArgs { bandwidth_c: Some(3.0), bandwidth_nu: None, fixed_h: None }.apply(&mut k).unwrap();
        assert_eq!(k.bandwidth, Bandwidth::Rule { c: 3.0, nu: 1.0 / 3.0 });
        KernelArgs { bandwidth_c: None, bandwidth_nu: None, fixed_h: Some(0.5) }.apply(&mut k).unwrap();
        assert_eq!(k.bandwidth, Bandwidth::Fixed { h: 0.5 });
        assert!(KernelArgs { bandwidth_c: Some(1.0), bandwidth_nu: None, fixed_h: Some(0.5) }
            .apply(&mut k)
            .is_err());
        assert!(KernelArgs { bandwidth_c: None, bandwidth_nu: Some(0.9), fixed_h: None }
            .apply(&mut KernelConfig::default())
            .is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["recurvis", "simulate", "--scenario", "XI", "--out", "/dev/null"]), 2);
        assert_eq!(run(["recurvis", "simulate", "--scenario", "I", "--reps", "0", "--out", "/dev/null"]), 2);
        assert_eq!(run(["recurvis", "frobnicate"]), 2);
        assert_eq!(run(["recurvis", "--version"]), 0);
    }
}
