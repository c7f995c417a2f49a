mod cli;
mod commands;
mod settings;

use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use cli::{Cli, Command};
use commands::{Failure, EXIT_USAGE};
use settings::Settings;

fn init_logging(level: Option<&str>) {
    let filter = match std::env::var("RUST_LOG") {
        Ok(v) if !v.is_empty() => EnvFilter::new(v),
        _ => EnvFilter::new(level.unwrap_or("warn")),
    };
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).with_target(false).init();
}

async fn run(cli: Cli) -> Result<u8, Failure> {
    let settings = Settings::load(&cli.global).map_err(|e| Failure::new(EXIT_USAGE, format!("{e:#}")))?;
    init_logging(settings.log_level.as_deref());
    let json = cli.global.json;
    match &cli.command {
        Command::Validate(a) => commands::validate_cmd(a, &settings, json),
        Command::Closure(a) => commands::closure_cmd(a, &settings, json),
        Command::Coverage(a) => commands::coverage_cmd(a, &settings, json),
        Command::Measure(a) => commands::measure_cmd(a, &settings, json),
        Command::Call(a) => commands::call_cmd(a, &settings, json).await,
        Command::Serve(a) => commands::serve_cmd(a, &settings).await,
        Command::Schema => commands::schema_cmd(),
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).await {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("toolctl: {f}");
            ExitCode::from(f.code)
        }
    }
}
