//! Edge agent: reads landmark frames, scores them, forwards suspicions.

use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use shelfwatch_services::edge::AgentConfig;
use shelfwatch_services::edge::{open_source, run_agent};

#[derive(Parser)]
#[command(name = "shelfwatch-edge", version, about = "Run the per-camera edge agent")]
struct Args {
    /// Agent configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Landmark source: a file of NDJSON frames, `-` for stdin, or
    /// `tcp://host:port` to accept one connection.
    #[arg(long, default_value = "-")]
    source: String,
    #[arg(long, default_value = "info")]
    log_level: String,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    shelfwatch_cli::init_logging(&args.log_level)?;
    let config = AgentConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    let source = open_source(&args.source).with_context(|| format!("opening {}", args.source))?;
    let summary = run_agent(&config, source)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(e) = &summary.stream_error {
        anyhow::bail!("landmark stream ended with an error: {e}");
    }
    if summary.undelivered > 0 {
        anyhow::bail!("{} events were still queued at exit", summary.undelivered);
    }
    Ok(())
}
