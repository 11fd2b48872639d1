use std::path::PathBuf;
use std::process::ExitCode;

use carleman_cli::{report, run, Format};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

/// Config-driven runs of the weight, tower, mollifier and approximation
/// pipelines.
#[derive(Debug, Parser)]
#[command(name = "carleman", version)]
struct Cli {
    /// Command group: weights, tower, mollifier, approx or demo.
    group: String,
    /// Command within the group, e.g. `analyze` or `prop15`.
    command: String,
    /// `section.key = value` file; defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("cannot read {}: {e}", path.display());
                return ExitCode::from(3);
            }
        },
        None => String::new(),
    };
    let format = match cli.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    let command = format!("{} {}", cli.group, cli.command);
    let rendered = match run(&command, &text, cli.seed, format) {
        Ok(r) => r,
        Err((code, msg)) => {
            eprintln!("{msg}");
            return ExitCode::from(code as u8);
        }
    };
    let written = match &cli.out {
        Some(dir) => {
            let ext = if format == Format::Json { "json" } else { "csv" };
            let name = format!("{}_{}.{ext}", cli.group, cli.command);
            report::write_atomic(dir, &name, &rendered.body).map(|p| eprintln!("wrote {}", p.display()))
        }
        None => {
            print!("{}", rendered.body);
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("cannot write report: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(rendered.status.exit_code() as u8)
}
