#![allow(clippy::neg_cmp_op_on_partial_ord)]
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qqm_cli::{execute, presets_listing, CliError, ExperimentKind, Format};

#[derive(Parser)]
#[command(name = "qqm-lab", version, about = "Quaternionic quantum mechanics experiments from config files")]
struct Cli {
    /// Print the shipped field and material presets and exit.
    #[arg(long)]
    list_presets: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Transmission and reflection through a barrier stack at one energy.
    Scatter(RunArgs),
    /// Transmission phase difference when two barriers swap order.
    OrderSwap(RunArgs),
    /// Slab phases plus a simulated, fitted interferogram.
    Interfere(RunArgs),
    /// Four-body GHSZ correlation.
    Ghsz(RunArgs),
    /// Two-body singlet correlation.
    Singlet(RunArgs),
    /// Loop holonomy of an imaginary-unit field.
    Holonomy(RunArgs),
    /// Scattering over an energy grid.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = "QQM_LAB_OUT", default_value = ".")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Svg,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Svg => Format::Svg,
        }
    }
}

fn run_command(kind: ExperimentKind, args: RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let text =
        std::fs::read_to_string(&args.config).map_err(|source| CliError::Io { path: args.config.clone(), source })?;
    let (path, report) = execute(kind, &text, args.seed, args.format.into(), &args.out)?;
    for w in &report.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let _ = writeln!(out, "{}", path.display());
    Ok(())
}

/// Whole command line in, process exit code out.
fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return e.exit_code() as u8;
        }
    };
    if cli.list_presets {
        let _ = write!(out, "{}", presets_listing());
        return 0;
    }
    let Some(command) = cli.command else {
        let _ = writeln!(err, "error: a subcommand is required (see --help)");
        return 2;
    };
    let (kind, args) = match command {
        Command::Scatter(a) => (ExperimentKind::Scatter, a),
        Command::OrderSwap(a) => (ExperimentKind::OrderSwap, a),
        Command::Interfere(a) => (ExperimentKind::Interfere, a),
        Command::Ghsz(a) => (ExperimentKind::Ghsz, a),
        Command::Singlet(a) => (ExperimentKind::Singlet, a),
        Command::Holonomy(a) => (ExperimentKind::Holonomy, a),
        Command::Sweep(a) => (ExperimentKind::Sweep, a),
    };
    match run_command(kind, args, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    let code = run_cli(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code)
}
