mod manifest;
mod pipeline;
mod scenario;
mod verify;

use anyhow::Result;
use clap::{Parser, Subcommand};
use manifest::{RunManifest, Status, Verdict};
use pipeline::Run;
use scenario::{ParseError, Scenario};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nullcone", version, about = "Past null cone diagnostics on prescribed spacetimes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace the past null cone: ray tables and cone slices.
    Trace(Flags),
    /// Conjugacy, cut locus and injectivity radius per base point.
    Injectivity(Flags),
    /// Reduced curvature flux over the delta ladder.
    Flux(Flags),
    /// Energy Gronwall check, metric equivalence and volume radius.
    Energy(Flags),
    /// Run the verification suite.
    Verify(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Trace(_) => "trace",
            Command::Injectivity(_) => "injectivity",
            Command::Flux(_) => "flux",
            Command::Energy(_) => "energy",
            Command::Verify(_) => "verify",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Trace(f) | Command::Injectivity(f) | Command::Flux(f) | Command::Energy(f) | Command::Verify(f) => f,
        }
    }
}

#[derive(clap::Args)]
struct Flags {
    /// Scenario file (TOML, or JSON with a .json extension).
    scenario: PathBuf,
    #[arg(long)]
    grid_level: Option<u32>,
    #[arg(long)]
    s_max: Option<f64>,
    /// Relative integrator tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, env = "NULLCONE_WORKERS")]
    workers: Option<usize>,
    /// Continue when the budget audit fails.
    #[arg(long)]
    force: bool,
    /// Output directory; artifacts go to <out>/<command>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
#[error("budget audit failed (rerun with --force to continue)")]
struct BudgetFailure;

#[derive(Debug, thiserror::Error)]
#[error("{0} asserted check(s) failed")]
struct VerifyFailure(usize);

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ParseError>().is_some() {
        2
    } else if e.downcast_ref::<BudgetFailure>().is_some() {
        3
    } else if let Some(nullcone::Error::DeltaBeyondInjectivity { .. }) = e.downcast_ref::<nullcone::Error>() {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(command: &Command) -> Result<()> {
    let flags = command.flags();
    let (mut scenario, bytes) = Scenario::load(&flags.scenario)?;
    if let Some(l) = flags.grid_level {
        scenario.grid_level = l;
    }
    if let Some(s) = flags.s_max {
        scenario.s_max = s;
    }
    let base = flags.out.clone().or_else(|| scenario.output.clone()).unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));
    let out = base.join(command.name());
    std::fs::create_dir_all(&out)?;
    let workers = flags.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let manifest = RunManifest::new(command.name(), &scenario.name, &bytes, workers);
    let mut run = Run { scenario, tol: flags.tol, out, manifest };
    pool.install(|| dispatch(command, &mut run, flags.force))
}

fn dispatch(command: &Command, run: &mut Run, force: bool) -> Result<()> {
    let audit = run.audit();
    if !audit.passed && !force {
        run.write_manifest()?;
        return Err(BudgetFailure.into());
    }
    let result = match command {
        Command::Trace(_) => pipeline::trace(run),
        Command::Injectivity(_) => pipeline::injectivity(run),
        Command::Flux(_) => pipeline::flux(run),
        Command::Energy(_) => pipeline::energy(run),
        Command::Verify(_) => run_verify(run),
    };
    run.write_manifest()?;
    result?;
    if let Command::Verify(_) = command {
        let failed = run.manifest.verdicts.iter().filter(|v| v.is_failure()).count();
        if failed > 0 {
            return Err(VerifyFailure(failed).into());
        }
    }
    println!("artifacts written to {}", run.out.display());
    Ok(())
}

fn run_verify(run: &mut Run) -> Result<()> {
    let rows = verify::verify(run)?;
    run.write_json("verify.json", &rows)?;
    run.write_csv("verdicts.csv", &rows)?;
    print_table(&rows);
    run.manifest.verdicts.extend(rows);
    Ok(())
}

fn print_table(rows: &[Verdict]) {
    let line = |v: &Verdict| {
        let point = v.point.map(|p| format!("p{p}")).unwrap_or_else(|| "-".into());
        let measured = v.measured.map(|m| format!("{m:.3e}")).unwrap_or_default();
        println!("{:<11} {:<26} {:<4} {:>11}  \"{}\"", format!("{:?}", v.status).to_uppercase(), v.check, point, measured, v.anchor);
    };
    for v in rows.iter().filter(|v| v.status != Status::Unresolved) {
        line(v);
    }
    let unresolved: Vec<&Verdict> = rows.iter().filter(|v| v.status == Status::Unresolved).collect();
    if !unresolved.is_empty() {
        println!("unresolved (grid-limited, not failures):");
        for v in unresolved {
            line(v);
            println!("            {}", v.detail);
        }
    }
}
