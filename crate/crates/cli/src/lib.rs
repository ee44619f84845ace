//! Config-driven runs of the dichotomy toolkit: spectra, exponents,
//! certificates, uniformity exploration and the conjecture sweep.
//!
//! Each command computes a result, then a single writer emits the report
//! document and CSV files at the end of the run.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dichotomy::bohl::{lower_bohl, upper_bohl};
use dichotomy::grassmann::{derive_seed, is_splitting, sample_uniform, Splitting};
use dichotomy::spectrum::{
    certify_dichotomy, compute_spectrum, conjecture_search, maximal_uniformity, uniformity_independence_check,
    ConjectureConfig,
};
use dichotomy::systems::empirical_bounds;
use dichotomy::Error;
use serde::Serialize;
use serde_json::Value;

pub use config::RunConfig;
use config::{input_error, subspace};

/// Version of the report and config document layout.
pub const REPORT_VERSION: u32 = 1;

/// Samples of the γ axis in the plot-data file.
pub const PLOT_POINTS: usize = 401;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical structure error: {0}")]
    Numerical(Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        input_error(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    fn json(self) -> bool {
        self != Format::Csv
    }

    fn csv(self) -> bool {
        self != Format::Json
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Spectrum,
    Exponents,
    Check,
    ExploreUniformity,
    ConjectureSearch,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Exponents => "exponents",
            Command::Check => "check",
            Command::ExploreUniformity => "explore-uniformity",
            Command::ConjectureSearch => "conjecture-search",
        }
    }

    fn stem(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Exponents => "exponents",
            Command::Check => "check",
            Command::ExploreUniformity => "uniformity",
            Command::ConjectureSearch => "conjecture",
        }
    }
}

/// Options of one invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Format,
    /// RFC 3339 time of the run; the only field allowed to differ between reruns.
    pub timestamp: String,
}

/// Everything a command produces, written in one go.
pub struct Outcome {
    /// Command-specific report fields.
    pub fields: Value,
    /// `(file name, CSV contents)`.
    pub csv: Vec<(String, String)>,
    /// Extra JSON documents besides the report.
    pub extra_json: Vec<(String, Value)>,
    /// Human-readable summary for stdout.
    pub summary: String,
}

#[derive(Serialize)]
struct Report<'a> {
    version: u32,
    command: &'a str,
    #[serde(flatten)]
    fields: &'a Value,
    config_echo: &'a RunConfig,
    timestamp: &'a str,
}

fn to_value<S: Serialize>(v: &S) -> Value {
    serde_json::to_value(v).expect("reports serialize to JSON")
}

/// Loads the config, runs the command and writes its files; returns the summary.
pub fn run(inv: &Invocation) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(&inv.config)?;
    if let Some(seed) = inv.seed {
        cfg.seed = seed;
    }
    cfg.budgets.seed = cfg.seed;
    let out_dir = cfg.output_dir(inv.output.as_deref());
    let result = match inv.command {
        Command::Spectrum => cmd_spectrum(&cfg),
        Command::Exponents => cmd_exponents(&cfg),
        Command::Check => cmd_check(&cfg),
        Command::ExploreUniformity => cmd_explore_uniformity(&cfg),
        Command::ConjectureSearch => cmd_conjecture_search(&cfg),
    };
    match result {
        Ok(outcome) => {
            write_outputs(&out_dir, inv, &cfg, &outcome)?;
            Ok(outcome.summary)
        }
        Err(CliError::Numerical(e)) => {
            // Numerical failures still leave a report for diagnosis.
            let fields = serde_json::json!({ "error": e.to_string() });
            let failed = Outcome { fields, csv: Vec::new(), extra_json: Vec::new(), summary: String::new() };
            write_outputs(&out_dir, &Invocation { format: Format::Json, ..inv.clone() }, &cfg, &failed)?;
            Err(CliError::Numerical(e))
        }
        Err(e) => Err(e),
    }
}

fn write_outputs(dir: &Path, inv: &Invocation, cfg: &RunConfig, outcome: &Outcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    if inv.format.json() {
        let report = Report {
            version: REPORT_VERSION,
            command: inv.command.name(),
            fields: &outcome.fields,
            config_echo: cfg,
            timestamp: &inv.timestamp,
        };
        let text = serde_json::to_string_pretty(&report).expect("reports serialize to JSON");
        std::fs::write(dir.join(format!("{}.json", inv.command.stem())), text + "\n")?;
        for (name, v) in &outcome.extra_json {
            std::fs::write(dir.join(name), serde_json::to_string_pretty(v).expect("serializable") + "\n")?;
        }
    }
    if inv.format.csv() {
        for (name, text) in &outcome.csv {
            std::fs::write(dir.join(name), text)?;
        }
    }
    Ok(())
}

/// Spectrum, filtration and decomposition, with convergence traces and plot data.
pub fn cmd_spectrum(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let system = cfg.system()?;
    let dims = cfg.uniformity_dims(system.dim())?;
    let grid = cfg.grid()?;
    let search = cfg.search()?;
    let report = compute_spectrum(&system, &dims, &grid, &search).map_err(CliError::from)?;

    let mut traces = String::from("kind,k,j,N,value\n");
    for e in &report.diagnostics.exponents {
        for (n, v) in &e.per_floor {
            let _ = writeln!(traces, "{},{},{},{n},{v}", e.kind, e.k, e.j);
        }
    }
    let (lo, hi) = empirical_bounds(&system, cfg.horizon).exponent_range();
    let (lo, hi) = (lo - 0.5, hi + 0.5);
    let mut plot = String::from("gamma,in_spectrum\n");
    for i in 0..PLOT_POINTS {
        let g = lo + (hi - lo) * i as f64 / (PLOT_POINTS - 1) as f64;
        let _ = writeln!(plot, "{g},{}", u8::from(report.contains(g)));
    }
    let mut summary = String::from("spectrum:");
    for (a, b) in &report.intervals {
        let _ = write!(summary, " [{a:.4}, {b:.4}]");
    }
    for n in &report.diagnostics.notes {
        let _ = write!(summary, "\nnote: {n}");
    }
    Ok(Outcome {
        fields: to_value(&report),
        csv: vec![("spectrum_traces.csv".into(), traces), ("spectrum_plot.csv".into(), plot)],
        extra_json: Vec::new(),
        summary,
    })
}

/// Upper and lower Bohl exponents of one subspace, per window floor.
pub fn cmd_exponents(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let system = cfg.system()?;
    let d = system.dim();
    let u = match cfg.exponents.as_ref().and_then(|e| e.subspace.as_ref()) {
        Some(rows) => subspace(d, rows)?,
        None => dichotomy::Subspace::full(d),
    };
    if u.is_zero() {
        return Err(CliError::Config("exponent subspace must be nonzero".into()));
    }
    let grid = cfg.grid()?;
    let upper = upper_bohl(&system, &u, &grid)?;
    let lower = lower_bohl(&system, &u, &grid)?;
    let mut table = String::from("N,lower,upper\n");
    let mut summary = format!("{:>8} {:>12} {:>12}\n", "N", "lower", "upper");
    for ((n, lo), (_, up)) in lower.per_floor.iter().zip(&upper.per_floor) {
        let _ = writeln!(table, "{n},{lo},{up}");
        let _ = writeln!(summary, "{n:>8} {:>12} {:>12}", format!("{lo:.6}"), format!("{up:.6}"));
    }
    let _ = write!(summary, "converged: lower {} upper {}", lower.converged, upper.converged);
    let fields = serde_json::json!({ "subspace": u.to_rows(), "upper": upper, "lower": lower });
    Ok(Outcome { fields, csv: vec![("exponents_traces.csv".into(), table)], extra_json: Vec::new(), summary })
}

/// Dichotomy certificate at one rate for one splitting.
pub fn cmd_check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.check.as_ref().ok_or_else(|| CliError::Config("check needs a \"check\" section".into()))?;
    let system = cfg.system()?;
    let d = system.dim();
    let l1 = subspace(d, &spec.l1)?;
    let l2 = match &spec.l2 {
        Some(rows) => subspace(d, rows)?,
        None => l1.orthogonal_complement(),
    };
    let split = Splitting::new(l1, l2)?;
    let cert = certify_dichotomy(&system, spec.gamma, &split, spec.dims, &cfg.grid()?, &cfg.search()?)?;
    let summary = format!(
        "verdict {:?} at gamma {} with alpha {:.4}; c1_max {:.6e}, c2_min {:.6e} over {} samples",
        cert.verdict, cert.gamma, cert.alpha, cert.c1_max, cert.c2_min, cert.samples
    );
    let csv = format!(
        "gamma,alpha,verdict,c1_max,c2_min,samples\n{},{},{:?},{},{},{}\n",
        cert.gamma, cert.alpha, cert.verdict, cert.c1_max, cert.c2_min, cert.samples
    );
    Ok(Outcome { fields: to_value(&cert), csv: vec![("check.csv".into(), csv)], extra_json: Vec::new(), summary })
}

/// Maximal uniformity dimensions on `(L1, L1^⊥)` and their dependence on the complement.
pub fn cmd_explore_uniformity(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg
        .uniformity
        .as_ref()
        .ok_or_else(|| CliError::Config("explore-uniformity needs a \"uniformity\" section".into()))?;
    let system = cfg.system()?;
    let d = system.dim();
    let grid = cfg.grid()?;
    let search = cfg.search()?;
    let l1 = subspace(d, &spec.l1)?;
    let mut complements = spec.complements.iter().map(|rows| subspace(d, rows)).collect::<Result<Vec<_>, _>>()?;
    if spec.random_complements > 0 {
        let pool = sample_uniform(d, d - l1.dim(), 4 * spec.random_complements, derive_seed(cfg.seed, 0xC0))?;
        complements.extend(pool.into_iter().filter(|l2| is_splitting(&l1, l2)).take(spec.random_complements));
    }
    let mu =
        maximal_uniformity(&system, &Splitting::orthogonal(l1.clone())?, &grid, &search).map_err(CliError::from)?;
    let independence = uniformity_independence_check(&system, &l1, &complements, &grid, &search)?;
    let mut csv = String::from("complement,orthogonal,u1,u2\n");
    for (i, c) in independence.complements.iter().enumerate() {
        let (u1, u2) = c.dims.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
        let _ = writeln!(csv, "{i},{},{u1},{u2}", c.orthogonal);
    }
    let mut summary = format!("maximal uniformity dimensions on (L1, L1^perp): ({}, {})", mu.u1, mu.u2);
    let _ = write!(
        summary,
        "\nu1 consistent across {} complements: {}",
        independence.complements.len(),
        independence.u1_consistent
    );
    for f in &independence.findings {
        let _ = write!(summary, "\nfinding: {f}");
    }
    let fields = serde_json::json!({ "maximal": mu, "independence": independence });
    Ok(Outcome { fields, csv: vec![("uniformity.csv".into(), csv)], extra_json: Vec::new(), summary })
}

/// Randomized sweep for complements with different `u2`.
pub fn cmd_conjecture_search(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.conjecture.clone().unwrap_or_default();
    let search = ConjectureConfig {
        families: spec.families,
        dims: spec.dims,
        systems: spec.systems,
        complements: spec.complements,
        horizon: cfg.horizon,
        window_floors: cfg.grid.window_floors.clone(),
        rate: spec.rate,
        seed: cfg.seed,
        budgets: cfg.budgets.clone().with_seed(cfg.seed),
    };
    let report = conjecture_search(&search)?;
    let mut csv = String::from("family,dim,dim_l1,system_seed,u2,u2_other\n");
    for f in &report.findings {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            to_value(&f.family).as_str().unwrap_or(""),
            f.dim,
            f.dim_l1,
            f.system_seed,
            f.u2,
            f.u2_other
        );
    }
    let summary = format!(
        "{} systems, {} complements, {} skipped: {} findings, {} anomalies",
        report.systems_checked,
        report.complements_checked,
        report.skipped,
        report.findings.len(),
        report.anomalies.len()
    );
    Ok(Outcome {
        fields: to_value(&report),
        csv: vec![("findings.csv".into(), csv)],
        extra_json: vec![("findings.json".into(), to_value(&report.findings))],
        summary,
    })
}
