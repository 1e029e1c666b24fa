mod config;
mod output;
mod tasks;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::RunConfig;
use output::{write_manifest, Manifest};

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Malformed or physically invalid configuration.
    Config(String),
    /// A numerical routine or identity check missed its tolerance.
    Numerical(String),
    /// The susceptibility has undamped poles.
    Pole(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Io(_) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Pole(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Pole(m) => write!(f, "pole scan failure: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<oscfluct::Error> for CliError {
    fn from(e: oscfluct::Error) -> Self {
        use oscfluct::Error as E;
        match e {
            E::Domain(_) | E::InvalidSpectral(_) | E::InvalidPreparation(_) | E::Unsupported(_) => {
                Self::Config(e.to_string())
            }
            E::Pole { .. } | E::PoleScan(_) => Self::Pole(e.to_string()),
            E::Tolerance(_) | E::Branch { .. } | E::Budget(_) | E::Oracle(_) | E::Consistency(_) => {
                Self::Numerical(e.to_string())
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "oscfluct",
    version,
    about = "Nonequilibrium fluctuations of a harmonic oscillator between harmonic baths"
)]
struct Cli {
    /// Worker threads for parallel quadrature (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Accepted for interface stability; no computation uses randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured task and write CSV artifacts plus manifest.json.
    Run {
        config: PathBuf,
        /// Overrides the output path from the configuration.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check the configuration and physics without running the task.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<(RunConfig, oscfluct::scenario::Scenario), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&text)?;
    let sc = cfg.scenario.build()?;
    if cfg.task.needs_two_baths() && sc.bath_count() != 2 {
        return Err(CliError::Config(format!(
            "transport requires exactly two baths, got {}",
            sc.bath_count()
        )));
    }
    sc.require_pole_free()?;
    Ok((cfg, sc))
}

fn validate(path: &Path) -> Result<(), CliError> {
    let (cfg, sc) = load(path)?;
    let scan = sc.pole_scan();
    let summary = json!({
        "task": cfg.task.name(),
        "baths": sc.bath_count(),
        "omega_max": scan.omega_max,
        "pole_scan_points": scan.points,
        "min_denominator": scan.min_denominator,
        "task_settings": cfg.task,
        "tolerances": cfg.tolerances,
    });
    println!("ok");
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    Ok(())
}

fn run(path: &Path, output_dir: Option<PathBuf>, cli: &Cli) -> Result<(), CliError> {
    let (cfg, sc) = load(path)?;
    let dir = output_dir
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("oscfluct-{}", cfg.task.name())));
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let report = tasks::run(&cfg.task, &sc, &cfg.tolerances)?;
    let mut artifacts = Vec::new();
    for t in &report.tables {
        t.write(&dir)?;
        artifacts.push(t.file_name());
    }
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    let manifest = Manifest {
        library_version: oscfluct::VERSION,
        task: cfg.task.name(),
        config: &cfg,
        seed: cli.seed,
        threads: cli.threads,
        status: if failed.is_empty() { "pass" } else { "fail" },
        checks: &report.checks,
        achieved: &report.achieved,
        artifacts,
    };
    write_manifest(&dir, &manifest)?;
    for c in &report.checks {
        let verdict = match (c.tolerance, c.passed) {
            (None, _) => "report".to_string(),
            (Some(t), true) => format!("pass (< {t:e})"),
            (Some(t), false) => format!("FAIL (>= {t:e})"),
        };
        println!("{:<32} {:>24.16e}  {verdict}", c.name, c.value);
    }
    println!("artifacts written to {}", dir.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "checks out of tolerance: {}",
            failed.join(", ")
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("configuration error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Run { config, output_dir } => run(config, output_dir.clone(), &cli),
        Command::Validate { config } => validate(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
