use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coiso_lab::catalog;
use coiso_lab::runner::{prepare, run, Command, RunOptions};
use coiso_lab::scenario::Scenario;
use coiso_lab::LabError;

#[derive(Parser)]
#[command(name = "coiso-lab", version, about = "Coisotropy, gauge and transport checks for Poisson sigma model paths")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Jacobiator of the bivector and coisotropy of the boundary submanifolds
    CheckPoisson(RunArgs),
    /// Solve the discrete compatibility constraint on every grid
    Solve(RunArgs),
    /// Parallel transport of the structure tensor along the path
    Transport(RunArgs),
    /// Gauge symmetry of the constraint and the momentum map
    Gauge(RunArgs),
    /// Coisotropy of the compatible pairs, characteristic directions, twisted equation
    Coiso(RunArgs),
    /// Endpoint maps, kernel orthogonality and reduced dimensions
    DualPair(RunArgs),
    /// Every check above plus the linear-algebra lemmas
    All(RunArgs),
    /// List the built-in scenarios
    Catalog {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON); may be repeated
    #[arg(long, value_name = "FILE")]
    scenario: Vec<PathBuf>,
    /// Built-in scenario name; may be repeated. Without any scenario the whole catalog runs
    #[arg(long, value_name = "NAME")]
    builtin: Vec<String>,
    /// Comma-separated grid sizes replacing each scenario's grid
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Seed for sampled points and gauge fields; also re-seeds random eta
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override KEY=VAL; may be repeated
    #[arg(long = "tol-override", value_name = "KEY=VAL")]
    tol_override: Vec<String>,
    /// Treat failures of checks listed in a scenario's expect_fail as expected
    #[arg(long)]
    expect_fail: bool,
    /// Write the report here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn load(args: &RunArgs) -> Result<Vec<Scenario>, LabError> {
    let mut out = Vec::new();
    for p in &args.scenario {
        out.push(Scenario::load(p)?);
    }
    for b in &args.builtin {
        out.push(catalog::builtin(b)?);
    }
    if out.is_empty() {
        out = catalog::all();
    }
    Ok(out)
}

fn execute(cmd: Command, args: RunArgs) -> Result<bool, LabError> {
    let opts = RunOptions {
        seed: args.seed.unwrap_or(0),
        reseed_eta: args.seed.is_some(),
        grid: args.grid.clone(),
        tol_overrides: args.tol_override.clone(),
        expect_fail: args.expect_fail,
        threads: None,
    };
    if let Some(g) = &opts.grid {
        if g.is_empty() {
            return Err(LabError::Parse("grid is empty".into()));
        }
    }
    let scenarios = prepare(load(&args)?, &opts)?;
    let report = run(cmd, &scenarios, &opts)?;
    let body = match args.format {
        Format::Json => report.to_json() + "\n",
        Format::Text => report.to_text(),
    };
    match &args.out {
        Some(path) => {
            std::fs::write(path, body)
                .map_err(|e| LabError::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
            let s = &report.summary;
            eprintln!(
                "{} records: {} passed, {} failed, {} xfail, {} xpass -> {}",
                s.total,
                s.passed,
                s.failed,
                s.xfail,
                s.xpass,
                path.display()
            );
        }
        None => print!("{body}"),
    }
    Ok(report.all_ok())
}

fn catalog_listing(format: Format) -> String {
    match format {
        Format::Text => catalog::all()
            .iter()
            .map(|s| {
                format!(
                    "{:<28} {}\n",
                    s.name(),
                    s.spec.description.as_deref().unwrap_or("")
                )
            })
            .collect(),
        Format::Json => {
            let specs: Vec<_> = catalog::all().into_iter().map(|s| s.spec).collect();
            serde_json::to_string_pretty(&specs).expect("specs serialize") + "\n"
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Catalog { format } => {
            print!("{}", catalog_listing(format));
            return ExitCode::SUCCESS;
        }
        Cmd::CheckPoisson(a) => (Command::CheckPoisson, a),
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Transport(a) => (Command::Transport, a),
        Cmd::Gauge(a) => (Command::Gauge, a),
        Cmd::Coiso(a) => (Command::Coiso, a),
        Cmd::DualPair(a) => (Command::DualPair, a),
        Cmd::All(a) => (Command::All, a),
    };
    match execute(cmd, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e @ LabError::Parse(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
