use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qergo_cli::scenario::verify_job_from;
use qergo_cli::{render_file, run, CliError, Format, Job, Kind, Scenario, Style, EXIT_PASS, EXIT_USER, EXIT_VIOLATION};
use qergo_core::Execution;

/// Complex conditional probabilities: identity checks, simulations and exports.
///
/// QERGO_THREADS caps the worker threads used for internal parallelism.
#[derive(Parser)]
#[command(name = "qergo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path prefix; the extension is added. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Check every identity over Haar-random bases.
    Verify {
        /// Dimensions, as a list (2,3,5) or an inclusive range (2..8).
        #[arg(long)]
        dims: Option<String>,
        /// Haar samples per dimension.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Conditional-probability table, optionally with a state's joint distribution.
    Kd,
    /// Simulated weak measurement with post-selection.
    Weak,
    /// Sequential projective measurement statistics.
    Seq,
    /// Lattice eigenstates, profiles and wavefunction scans.
    Lattice,
    /// Quantization check of a spectrum.
    Quantize,
    /// Render an export as SVG.
    Render {
        input: PathBuf,
        #[arg(long, value_enum)]
        style: Style,
    },
}

fn parse_dims(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("cannot read dimensions `{s}`"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        return if lo <= hi { Ok((lo..=hi).collect()) } else { Err(bad()) };
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("QERGO_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Usage(format!("QERGO_THREADS must be a positive integer, got `{raw}`")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn load_scenario(path: Option<&Path>, expected: Kind) -> Result<Scenario, CliError> {
    let Some(path) = path else {
        return match expected {
            Kind::Verify => Scenario::from_json(r#"{"kind":"verify"}"#),
            _ => Err(CliError::Usage(format!("`{}` needs --config", expected.command()))),
        };
    };
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    let scenario = Scenario::from_json(&text)?;
    if scenario.kind != expected {
        return Err(CliError::Usage(format!("config describes `{}` but the command is `{}`", scenario.kind.command(), expected.command())));
    }
    Ok(scenario)
}

fn emit(prefix: Option<&Path>, extension: &str, bytes: &[u8]) -> Result<(), CliError> {
    match prefix {
        Some(p) => {
            let path = PathBuf::from(format!("{}.{extension}", p.display()));
            std::fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.display().to_string(), source })
        }
        None => std::io::stdout().write_all(bytes).map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    configure_threads()?;
    let (kind, dims, seeds) = match &cli.command {
        Command::Render { input, style } => {
            let svg = render_file(input, *style)?;
            emit(cli.out.as_deref(), "svg", svg.as_bytes())?;
            return Ok(EXIT_PASS);
        }
        Command::Verify { dims, seeds } => (Kind::Verify, dims.as_deref(), *seeds),
        Command::Kd => (Kind::KdTable, None, None),
        Command::Weak => (Kind::WeakRun, None, None),
        Command::Seq => (Kind::SequentialRun, None, None),
        Command::Lattice => (Kind::Lattice, None, None),
        Command::Quantize => (Kind::Quantize, None, None),
    };
    let scenario = load_scenario(cli.config.as_deref(), kind)?;
    let prefix = cli.out.clone().or_else(|| scenario.output.clone().map(PathBuf::from));
    let mut job = scenario.into_job(cli.seed)?;
    if let Job::Verify { dims: d, seeds_per_dim, root_seed } = &job {
        if dims.is_some() || seeds.is_some() {
            let d = dims.map(parse_dims).transpose()?.unwrap_or_else(|| d.clone());
            job = verify_job_from(d, seeds.unwrap_or(*seeds_per_dim), *root_seed)?;
        }
    }
    let outcome = run(&job, cli.format, Execution::default())?;
    emit(prefix.as_deref(), outcome.artifact.extension, &outcome.artifact.bytes)?;
    if let Some(note) = &outcome.summary {
        eprint!("{note}{}", if note.ends_with('\n') { "" } else { "\n" });
    }
    Ok(if outcome.passed { EXIT_PASS } else { EXIT_VIOLATION })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USER as u8 } else { EXIT_PASS as u8 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("qergo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
