mod config;
mod error;
mod output;
mod studies;

use clap::{Args, Parser, Subcommand};
use config::{FileConfig, Overrides, StudyConfig, StudyKind};
use error::{CliError, CliResult};
use ringvib::analytical::{compare_fixture, parse_fixture, RING_EIGENPAIRS_FIXTURE};
use ringvib::ring::RingParams;
use ringvib::spectral::SpectralOptions;
use std::path::PathBuf;
use std::process::ExitCode;

const WORKERS_ENV: &str = "RINGVIB_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "ringvib", version, about = "Locking studies for isogeometric curved beams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ring error spectra per formulation, degree and mesh.
    Spectrum(StudyArgs),
    /// Locking metrics of coarse spectra against an overkill mesh.
    LockingIndicator(StudyArgs),
    /// Error of one analytical mode under uniform refinement.
    EigenConvergence(ConvergenceArgs),
    /// Quarter-ring cantilever convergence against an overkill reference.
    Cantilever(CantileverArgs),
    /// Recompute the closed-form ring table and compare it with a fixture.
    VerifyFixtures(FixtureArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML study configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Formulations (comma separated, or `all`).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    formulation: Option<Vec<String>>,
    /// Spline degrees (comma separated).
    #[arg(long = "p", value_delimiter = ',', num_args = 1..)]
    degrees: Option<Vec<usize>>,
    /// Slenderness R/t; keeps the canonical material and radius.
    #[arg(long)]
    slenderness: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Coarse element counts (comma separated).
    #[arg(long = "elems", value_delimiter = ',', num_args = 1..)]
    meshes: Option<Vec<usize>>,
    /// Overkill element count for locking metrics.
    #[arg(long)]
    overkill: Option<usize>,
    /// Metric above which a curve counts as locking, in decades.
    #[arg(long)]
    locking_threshold: Option<f64>,
    /// Metric below which a curve counts as locking-free, in decades.
    #[arg(long)]
    locking_free_threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "meshes", alias = "elems", value_delimiter = ',', num_args = 1..)]
    meshes: Option<Vec<usize>>,
    /// Circumferential wavenumber of the tracked mode.
    #[arg(long)]
    target_mode: Option<usize>,
    /// `transverse` or `circumferential`.
    #[arg(long)]
    branch: Option<String>,
}

#[derive(Debug, Args)]
struct CantileverArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "meshes", alias = "elems", value_delimiter = ',', num_args = 1..)]
    meshes: Option<Vec<usize>>,
    /// Skip the second overkill solve that validates the reference.
    #[arg(long)]
    skip_reference_check: bool,
}

#[derive(Debug, Args)]
struct FixtureArgs {
    /// Fixture CSV; the bundled table when omitted.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Relative tolerance per value.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Multiply Young's modulus before recomputing.
    #[arg(long, default_value_t = 1.0)]
    modulus_scale: f64,
}

fn common_overrides(c: CommonArgs) -> (Option<PathBuf>, Overrides) {
    let o = Overrides {
        formulations: c.formulation,
        degrees: c.degrees,
        slenderness: c.slenderness,
        output: c.out,
        ..Default::default()
    };
    (c.config, o)
}

fn worker_pool() -> CliResult<rayon::ThreadPool> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::config(WORKERS_ENV, format!("expected a positive integer, got '{v}'")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::config(WORKERS_ENV, e.to_string()))
}

fn run_study(kind: StudyKind, config: Option<PathBuf>, overrides: Overrides) -> CliResult<()> {
    let file = match &config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let cfg = StudyConfig::resolve(kind, &file, &overrides)?;
    let pool = worker_pool()?;
    let out = studies::run(&cfg, &pool)?;

    std::fs::create_dir_all(&cfg.output).map_err(|e| CliError::io(&cfg.output, e))?;
    let stamp = output::stamp();
    let mut files = vec!["report.csv".to_string()];
    output::write_text(&cfg.output.join("report.csv"), &out.report.to_csv(&stamp)?)?;
    for (name, table) in &out.extra {
        output::write_text(&cfg.output.join(name), &table.to_csv(&stamp)?)?;
        files.push(name.clone());
    }
    output::write_json(&cfg.output.join("verdicts.json"), &out.verdicts)?;
    files.push("verdicts.json".into());
    files.push("manifest.json".into());
    let manifest = serde_json::json!({
        "tool": "ringvib",
        "version": env!("CARGO_PKG_VERSION"),
        "generated": stamp,
        "study": cfg.kind,
        "config_file": config,
        "config": cfg,
        "spectral_options": SpectralOptions::default(),
        "workers": pool.current_num_threads(),
        "parameter_provenance": {
            "ring": "canonical set E = 1.2e6, rho = 1, R = 1, b = 1, t = 3/2000 unless overridden; slenderness overrides set t = R / slenderness",
            "cantilever": "canonical material and radius with t = R / slenderness, unit radial tip load",
            "analytical": "closed-form free-ring eigenpairs (Soedel)",
        },
        "outputs": files,
    });
    output::write_json(&cfg.output.join("manifest.json"), &manifest)?;

    for c in &out.verdicts.acceptance_checks {
        println!("{} ({})", c.outcome.line(), c.case);
    }
    println!("wrote {} files to {}", files.len(), cfg.output.display());
    Ok(())
}

fn verify_fixtures(args: FixtureArgs) -> CliResult<()> {
    if !(args.tol.is_finite() && args.tol > 0.0) {
        return Err(CliError::config("tol", "must be positive"));
    }
    if !(args.modulus_scale.is_finite() && args.modulus_scale > 0.0) {
        return Err(CliError::config("modulus-scale", "must be positive"));
    }
    let (label, text) = match &args.fixture {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::MissingFixture(path.clone()));
            }
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            (path.display().to_string(), text)
        }
        None => ("<bundled>".to_string(), RING_EIGENPAIRS_FIXTURE.to_string()),
    };
    let rows = parse_fixture(&text).map_err(|source| CliError::CorruptFixture { path: label.clone(), source })?;
    let params = RingParams::canonical().scaled_modulus(args.modulus_scale);
    let checks = compare_fixture(&rows, &params, args.tol);
    println!("fixture {label}, tolerance {:e}", args.tol);
    for c in &checks {
        let d = c.deviations;
        println!(
            "n={:>2} {} dlambda1={:.3e} dlambda2={:.3e} dr1={:.3e} dr2={:.3e}",
            c.n,
            if c.pass { "PASS" } else { "FAIL" },
            d[0],
            d[1],
            d[2],
            d[3]
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("{} of {} rows pass", checks.len() - failed, checks.len());
    if failed > 0 {
        return Err(CliError::FixtureMismatch { failed, total: checks.len() });
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Spectrum(a) => study_args(StudyKind::Spectrum, a),
        Command::LockingIndicator(a) => study_args(StudyKind::LockingIndicator, a),
        Command::EigenConvergence(a) => {
            let (config, mut o) = common_overrides(a.common);
            o.meshes = a.meshes;
            o.target_mode = a.target_mode;
            o.branch = a.branch;
            run_study(StudyKind::EigenConvergence, config, o)
        }
        Command::Cantilever(a) => {
            let (config, mut o) = common_overrides(a.common);
            o.meshes = a.meshes;
            o.skip_reference_check = a.skip_reference_check;
            run_study(StudyKind::Cantilever, config, o)
        }
        Command::VerifyFixtures(a) => verify_fixtures(a),
    }
}

fn study_args(kind: StudyKind, a: StudyArgs) -> CliResult<()> {
    let (config, mut o) = common_overrides(a.common);
    o.meshes = a.meshes;
    o.overkill = a.overkill;
    o.locking = a.locking_threshold;
    o.locking_free = a.locking_free_threshold;
    run_study(kind, config, o)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
