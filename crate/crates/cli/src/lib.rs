//! Command implementations behind the `capmin` binary.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use capmin::asymptotics::{convergence_report, predict, MacroLaw};
use capmin::landscape::{Landscape, Regime};
use capmin::minimizer::{mass_sweep, Crossing, Minimizer, DEFAULT_GRID};
use capmin::{CapminError, Family, PotentialSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Solver(#[from] CapminError),
}

impl CliError {
    /// 0 success, 1 usage or runtime failure, 2 invalid parameters,
    /// 3 no minimizer exists.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(CapminError::NoMinimizer(_)) => 3,
            CliError::Solver(CapminError::Param(_) | CapminError::Domain(_) | CapminError::NotApplicable(_)) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "capmin", version, about = "Mass-constrained thin-film minimizers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Landscape of R = Q/s, admissible heights and regime.
    Classify(Common),
    /// Global minimizer at a given mass.
    Solve(SolveArgs),
    /// Mass and energy along a log grid of maximal heights.
    Sweep(SweepArgs),
    /// Computed minimizers against the large-mass predictions.
    Asympt(AsymptArgs),
    /// Mass at which two branches exchange optimality.
    Crossing(CrossingArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum FamilyArg {
    ModelA,
    ModelB,
    ModelAGravity,
    ModelBGravity,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::ModelA => Family::ModelA,
            FamilyArg::ModelB => Family::ModelB,
            FamilyArg::ModelAGravity => Family::ModelAGravity,
            FamilyArg::ModelBGravity => Family::ModelBGravity,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, value_enum, conflicts_with = "spec_file")]
    pub family: Option<FamilyArg>,
    #[arg(long = "A", default_value_t = 1.0, allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long = "B", default_value_t = 0.0, allow_negative_numbers = true)]
    pub b: f64,
    #[arg(long = "S", default_value_t = 0.0, allow_negative_numbers = true)]
    pub s: f64,
    #[arg(long = "D", default_value_t = 0.0, allow_negative_numbers = true)]
    pub d: f64,
    #[arg(long = "m", allow_negative_numbers = true)]
    pub m: Option<f64>,
    #[arg(long = "n", allow_negative_numbers = true)]
    pub n: Option<f64>,
    /// JSON potential spec, e.g. {"family":"model_a","A":1,"S":-2.5,"m":2.5,"n":2}.
    #[arg(long)]
    pub spec_file: Option<PathBuf>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "M", allow_negative_numbers = true)]
    pub mass: f64,
    /// Absolute mass tolerance; defaults to 1e-8 M.
    #[arg(long)]
    pub mass_tol: Option<f64>,
    /// Profile grid size.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub points: usize,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1e-2)]
    pub u0_min: f64,
    #[arg(long, default_value_t = 1e2)]
    pub u0_max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
}

#[derive(Args, Debug, Clone)]
pub struct AsymptArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated masses.
    #[arg(long = "M-list", value_delimiter = ',', required = true)]
    pub masses: Vec<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct CrossingArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "M-min", default_value_t = 1e-2)]
    pub m_min: f64,
    #[arg(long = "M-max", default_value_t = 1e4)]
    pub m_max: f64,
}

/// Potential plus output destination shared by all commands.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: PotentialSpec,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn from_common(c: &Common) -> CliResult<Self> {
        let spec = match (&c.spec_file, c.family) {
            (Some(path), None) => {
                let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad spec file: {e}")))?
            }
            (None, Some(family)) => {
                let m = c.m.ok_or_else(|| CliError::Usage("--m is required".into()))?;
                let n = c.n.ok_or_else(|| CliError::Usage("--n is required".into()))?;
                PotentialSpec {
                    family: family.into(),
                    a: c.a,
                    b: c.b,
                    s: c.s,
                    d: c.d,
                    m,
                    n,
                    custom: None,
                }
            }
            _ => return Err(CliError::Usage("give exactly one of --family or --spec-file".into())),
        };
        Ok(Self {
            spec,
            out: c.out.clone(),
            format: c.format,
        })
    }

    /// Output path with its extension replaced, or `None` for stdout.
    fn sibling(&self, ext: &str) -> Option<PathBuf> {
        self.out.as_ref().map(|p| p.with_extension(ext))
    }
}

fn io_err(path: &Path, source: io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Opens every destination before any computation starts.
fn open(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_json<T: Serialize>(mut w: Box<dyn Write>, value: &T) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io {
        path: "output".into(),
        source: e.into(),
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(Path::new("output"), e))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io {
        path: "output".into(),
        source: e.into(),
    }
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{name} must be positive, got {v}")))
    }
}

pub fn cmd_classify(cfg: &RunConfig) -> CliResult<()> {
    if cfg.format == Format::Csv {
        return Err(CliError::Usage("classify writes JSON only".into()));
    }
    let out = open(cfg.out.as_deref())?;
    let report = Landscape::new(&cfg.spec)?.report()?;
    write_json(out, &report)
}

/// Writes the solution JSON, the profile CSV (`x,u,uprime`) and, when the
/// regime is known, a `.macro.csv` with the bulk and contact-line laws.
/// Without `--out`, only the document selected by `--format` goes to stdout.
pub fn cmd_solve(cfg: &RunConfig, mass: f64, mass_tol: Option<f64>, points: usize) -> CliResult<()> {
    positive("--M", mass)?;
    let tol = mass_tol.unwrap_or(1e-8 * mass);
    positive("--mass-tol", tol)?;
    let pot = cfg.spec.validate()?;
    let (json, profile_csv, macro_csv) = match &cfg.out {
        Some(_) => (
            Some(open(cfg.sibling("json").as_deref())?),
            Some(open(cfg.sibling("csv").as_deref())?),
            Some(cfg.sibling("macro.csv").expect("out path")),
        ),
        None if cfg.format == Format::Json => (Some(open(None)?), None, None),
        None => (None, Some(open(None)?), None),
    };

    let minimizer = Minimizer::new(&cfg.spec)?;
    let sol = minimizer.global_minimizer(mass, tol, points)?;
    if let Some(w) = json {
        write_json(w, &sol)?;
    }
    if let Some(w) = profile_csv {
        sol.profile.write_csv(w).map_err(csv_err)?;
    }
    let Some(path) = macro_csv else {
        return Ok(());
    };
    let regime = capmin::classify(&cfg.spec)?.regime;
    if regime == Regime::Unknown {
        return Ok(());
    }
    let pred = predict(&cfg.spec, mass)?;
    let law = MacroLaw::fitted(&pred, cfg.spec.s.abs(), &sol.profile)?;
    let c = pot.contact_prefactor();
    let alpha = 2.0 / (pot.m() + 1.0);
    let p = &sol.profile;
    let mut w = csv::Writer::from_writer(open(Some(&path))?);
    w.write_record(["x", "u", "uprime", "macro", "macro_prime", "micro", "micro_prime"])
        .map_err(csv_err)?;
    for i in 0..p.len() {
        let x = p.xs[i];
        let d = p.r_bar - x;
        let (mu, mp) = law.eval(x)?;
        let (mi, mip) = if d > 0.0 {
            (c * d.powf(alpha), -alpha * c * d.powf(alpha - 1.0))
        } else {
            (0.0, f64::NEG_INFINITY)
        };
        w.write_record([x, p.us[i], p.ups[i], mu, mp, mi, mip].map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(&path, e))
}

pub fn cmd_sweep(cfg: &RunConfig, u0_min: f64, u0_max: f64, points: usize) -> CliResult<()> {
    positive("--u0-min", u0_min)?;
    if !(u0_max > u0_min) || points < 2 {
        return Err(CliError::Usage("need --u0-max > --u0-min and --points >= 2".into()));
    }
    let out = open(cfg.out.as_deref())?;
    let sweep = mass_sweep(&cfg.spec, u0_min, u0_max, points)?;
    match cfg.format {
        Format::Csv => sweep.write_csv(out).map_err(csv_err),
        Format::Json => write_json(out, &sweep),
    }
}

pub fn cmd_asympt(cfg: &RunConfig, masses: &[f64]) -> CliResult<()> {
    if masses.is_empty() {
        return Err(CliError::Usage("--M-list is empty".into()));
    }
    for &m in masses {
        positive("--M-list entry", m)?;
    }
    let out = open(cfg.out.as_deref())?;
    let report = convergence_report(&cfg.spec, masses)?;
    match cfg.format {
        Format::Csv => report.write_csv(out).map_err(csv_err),
        Format::Json => write_json(out, &report),
    }
}

#[derive(Serialize)]
struct CrossingDoc {
    crossing: Option<Crossing>,
}

pub fn cmd_crossing(cfg: &RunConfig, m_min: f64, m_max: f64) -> CliResult<()> {
    positive("--M-min", m_min)?;
    if !(m_max > m_min) {
        return Err(CliError::Usage("need --M-max > --M-min".into()));
    }
    if cfg.format == Format::Csv {
        return Err(CliError::Usage("crossing writes JSON only".into()));
    }
    let out = open(cfg.out.as_deref())?;
    let crossing = Minimizer::new(&cfg.spec)?.find_energy_crossing(m_min, m_max)?;
    write_json(out, &CrossingDoc { crossing })
}

/// Caps the global thread pool at `CAPMIN_THREADS` when set.
pub fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("CAPMIN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| CliError::Usage(format!("CAPMIN_THREADS must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(CliError::Usage("CAPMIN_THREADS must be positive".into()));
    }
    // Fails only if a pool already exists, in which case it is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Classify(c) => cmd_classify(&RunConfig::from_common(&c)?),
        Command::Solve(a) => cmd_solve(&RunConfig::from_common(&a.common)?, a.mass, a.mass_tol, a.points),
        Command::Sweep(a) => cmd_sweep(&RunConfig::from_common(&a.common)?, a.u0_min, a.u0_max, a.points),
        Command::Asympt(a) => cmd_asympt(&RunConfig::from_common(&a.common)?, &a.masses),
        Command::Crossing(a) => cmd_crossing(&RunConfig::from_common(&a.common)?, a.m_min, a.m_max),
    }
}
