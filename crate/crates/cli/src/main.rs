use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use texbuild_core::manifest::{discover, BuildMode, ProjectManifest};
use texbuild_core::pipeline::{self, open_executor, Backend, BuildOptions};
use texbuild_core::scaffold::init_project;

/// Incremental containerized builds of LaTeX documents with reproducibility
/// checks.
#[derive(Debug, Parser)]
#[command(name = "texbuild", version)]
struct Cli {
    /// Project directory.
    #[arg(long, short = 'C', global = true, default_value = ".")]
    project: PathBuf,

    /// Where steps execute. `local` runs on the host and needs TeX installed.
    #[arg(long, global = true, value_enum, default_value_t = BackendArg::Auto)]
    backend: BackendArg,

    /// More diagnostics (repeat for debug output).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Auto,
    Docker,
    Podman,
    Local,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::Auto => Backend::Auto,
            BackendArg::Docker => Backend::Docker,
            BackendArg::Podman => Backend::Podman,
            BackendArg::Local => Backend::Local,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bring the artifacts up to date (the default command).
    Build(BuildArgs),
    /// Remove the artifacts directory, including logs and build state.
    Clean,
    /// Build twice from scratch and compare the PDFs byte by byte.
    Verify(VerifyArgs),
    /// Print the build graph in Graphviz DOT format.
    Graph,
    /// Show which steps are stale and why, without changing anything.
    Status(ModeArgs),
    /// Create a new project.
    Init(InitArgs),
}

#[derive(Debug, Args, Default)]
struct ModeArgs {
    /// Full (slow) results instead of draft. Also enabled by FULL=1.
    #[arg(long, env = "FULL", value_parser = clap::builder::BoolishValueParser::new())]
    full: bool,
}

impl ModeArgs {
    fn mode(&self) -> BuildMode {
        if self.full {
            BuildMode::Full
        } else {
            BuildMode::Draft
        }
    }
}

#[derive(Debug, Args, Default)]
struct BuildArgs {
    #[command(flatten)]
    mode: ModeArgs,
    /// Run every step regardless of staleness.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    build: BuildArgs,
    /// Compile without the determinism settings, to see what they remove.
    #[arg(long, hide = true)]
    no_repro_flags: bool,
}

#[derive(Debug, Args)]
struct InitArgs {
    /// Target directory; defaults to the project directory.
    dir: Option<PathBuf>,
    /// Document title.
    #[arg(long)]
    name: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    ExitCode::from(run(cli))
}

fn load(cli: &Cli) -> Result<ProjectManifest, u8> {
    discover(&cli.project).map_err(|e| {
        error!("{e}");
        2
    })
}

fn fail(e: pipeline::Error) -> u8 {
    error!("{e}");
    e.exit_code() as u8
}

fn run(cli: Cli) -> u8 {
    let command = match &cli.command {
        Some(c) => c,
        None => &Command::Build(BuildArgs::default()),
    };
    let result = match command {
        Command::Build(args) => cmd_build(&cli, args),
        Command::Clean => cmd_clean(&cli),
        Command::Verify(args) => cmd_verify(&cli, args),
        Command::Graph => cmd_graph(&cli),
        Command::Status(args) => cmd_status(&cli, args),
        Command::Init(args) => cmd_init(&cli, args),
    };
    match result {
        Ok(()) => 0,
        Err(code) => code,
    }
}

fn options(args: &BuildArgs, reproducible: bool) -> BuildOptions {
    BuildOptions {
        mode: args.mode.mode(),
        force: args.force,
        reproducible,
    }
}

fn cmd_build(cli: &Cli, args: &BuildArgs) -> Result<(), u8> {
    let m = load(cli)?;
    let executor = open_executor(cli.backend.into()).map_err(|e| fail(e.into()))?;
    let outcome = pipeline::build(&m, executor.as_ref(), &options(args, true)).map_err(fail)?;
    eprint!("{outcome}");
    Ok(())
}

fn cmd_clean(cli: &Cli) -> Result<(), u8> {
    let m = load(cli)?;
    if pipeline::clean(&m).map_err(fail)? {
        eprintln!("removed {}", m.artifacts_path().display());
    }
    Ok(())
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> Result<(), u8> {
    let m = load(cli)?;
    // Any failure to produce both PDFs is a verification error, not a
    // difference.
    let executor = open_executor(cli.backend.into()).map_err(|e| {
        error!("{e}");
        2
    })?;
    let opts = options(&args.build, !args.no_repro_flags);
    let report = pipeline::verify_reproducibility(&m, executor.as_ref(), &opts).map_err(|e| {
        error!("{e}");
        2
    })?;
    eprint!("{}", report.to_text());
    eprintln!(
        "report written to {}",
        pipeline::VerifyPaths::new(&m).report.display()
    );
    if report.identical() {
        Ok(())
    } else {
        Err(1)
    }
}

fn cmd_graph(cli: &Cli) -> Result<(), u8> {
    let m = load(cli)?;
    print!(
        "{}",
        pipeline::graph_dot(&m).map_err(|e| {
            error!("{e}");
            2
        })?
    );
    Ok(())
}

fn cmd_status(cli: &Cli, args: &ModeArgs) -> Result<(), u8> {
    let m = load(cli)?;
    let s = pipeline::status(&m, args.mode(), false).map_err(fail)?;
    for (kind, reasons) in &s.steps {
        if reasons.is_empty() {
            println!("{:<13} fresh", kind.name());
        } else {
            let why: Vec<String> = reasons.iter().map(ToString::to_string).collect();
            println!("{:<13} stale: {}", kind.name(), why.join("; "));
        }
    }
    Ok(())
}

fn cmd_init(cli: &Cli, args: &InitArgs) -> Result<(), u8> {
    let dir = args.dir.clone().unwrap_or_else(|| cli.project.clone());
    let created = init_project(&dir, args.name.as_deref()).map_err(|e| {
        error!("{e}");
        2
    })?;
    for p in created {
        eprintln!("created {}", p.display());
    }
    Ok(())
}
