use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "toolctl", version, about = "Validate, inspect and serve DADL tool libraries")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Optional YAML config file; flags and environment take precedence.
    #[arg(long, global = true, env = "DADL_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory of `.dadl` files.
    #[arg(long, global = true, env = "DADL_LIBRARY_DIR")]
    pub library_dir: Option<PathBuf>,
    /// Flat YAML map of credential keys; serves `file/...` and every namespace the library references.
    #[arg(long, global = true, env = "DADL_SECRETS_FILE")]
    pub secrets_file: Option<PathBuf>,
    /// Full credential resolver configuration (YAML); replaces `--secrets-file` wiring.
    #[arg(long, global = true, env = "DADL_RESOLVER_CONFIG")]
    pub resolver_config: Option<PathBuf>,
    #[arg(long, global = true, env = "DADL_POLICY_FILE")]
    pub policy_file: Option<PathBuf>,
    /// Audit destination: a file path, or `-` for stderr.
    #[arg(long, global = true, env = "DADL_AUDIT_SINK")]
    pub audit_sink: Option<String>,
    /// Fail invocations whose audit record cannot be written.
    #[arg(long, global = true)]
    pub audit_strict: bool,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Log filter, e.g. `info` or `dadl_core=debug`. `RUST_LOG` wins when set.
    #[arg(long, global = true, env = "DADL_LOG")]
    pub log_level: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate `.dadl` files.
    Validate(ValidateArgs),
    /// Print the static endpoint surface of each file.
    Closure(ClosureArgs),
    /// Summarize coverage blocks.
    Coverage(PathsArgs),
    /// Compare flat tool advertisement against the two-tool surface.
    Measure(MeasureArgs),
    /// Invoke one tool through authorization, the HTTP engine and transforms.
    Call(CallArgs),
    /// Run the gateway.
    Serve(ServeArgs),
    /// Print the JSON Schema of the document format.
    Schema,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    /// Files or directories; defaults to the library directory.
    pub paths: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub paths: PathsArgs,
    /// Treat warnings as errors.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ClosureArgs {
    #[command(flatten)]
    pub paths: PathsArgs,
    /// Only list tools with this access label.
    #[arg(long)]
    pub access: Option<String>,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// Measure a calibrated synthetic catalog of N tools instead of the library.
    #[arg(long)]
    pub synthetic: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CallArgs {
    /// Tool name, bare or `backend.tool`.
    pub tool: String,
    /// Parameters as a JSON object.
    #[arg(long, default_value = "{}")]
    pub params: String,
    #[arg(long, default_value = "cli")]
    pub principal: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Transport {
    Stdio,
    Http,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum)]
    pub transport: Option<Transport>,
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    /// Poll the library directory and reload on change.
    #[arg(long)]
    pub watch: bool,
    /// Also list every tool as its own protocol tool.
    #[arg(long)]
    pub expose_native: bool,
    /// Default principal for stdio sessions.
    #[arg(long)]
    pub principal: Option<String>,
    /// Deny composites up front when the caller lacks a label they reach.
    #[arg(long)]
    pub strict_composites: bool,
}
