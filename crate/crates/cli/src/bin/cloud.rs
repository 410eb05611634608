//! Cloud service: HTTP API over the decision ledger and the inventory.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;

use shelfwatch_core::clock::SystemClock;
use shelfwatch_core::inventory::{Catalog, Inventory, InventoryConfig};
use shelfwatch_services::cloud::{CloudConfig, CloudService};
use shelfwatch_services::http::server::{serve, AppState};

#[derive(Parser)]
#[command(name = "shelfwatch-cloud", version, about = "Run the cloud decision service")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Product catalog (JSON `{"products": [...]}`).
    #[arg(long)]
    catalog: PathBuf,
    /// Directory for the inventory log, journal and snapshot. Without it
    /// all state is lost on exit.
    #[arg(long)]
    state_dir: Option<PathBuf>,
    /// Bearer token required on every request except /healthz.
    #[arg(long, env = "SHELFWATCH_TOKEN")]
    token: Option<String>,
    /// Shared secret put on control messages for the agents.
    #[arg(long, env = "SHELFWATCH_CONTROL_TOKEN", default_value = "")]
    control_token: String,
    #[arg(long, default_value_t = 120_000)]
    dedup_window_ms: i64,
    #[arg(long, default_value = "info")]
    log_level: String,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    shelfwatch_cli::init_logging(&args.log_level)?;
    let catalog = Catalog::load(&args.catalog).with_context(|| format!("loading {}", args.catalog.display()))?;
    let config = CloudConfig {
        dedup_window_ms: args.dedup_window_ms,
        control_token: args.control_token.clone(),
        ..CloudConfig::default()
    };
    let clock = Arc::new(SystemClock);
    let (inventory, cloud) = match &args.state_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let inventory = Arc::new(Inventory::open(
                catalog,
                InventoryConfig::default(),
                dir.join("inventory.wal"),
            )?);
            let cloud = CloudService::open(inventory.clone(), clock.clone(), config, &dir.join("cloud"))?;
            (inventory, cloud)
        }
        None => {
            let inventory = Arc::new(Inventory::new(catalog, InventoryConfig::default())?);
            let cloud = CloudService::in_memory(inventory.clone(), clock.clone(), config);
            (inventory, cloud)
        }
    };
    let state = AppState::new(Arc::new(cloud), inventory, clock, args.token.clone());

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.listen)
            .await
            .with_context(|| format!("binding {}", args.listen))?;
        let addr = listener.local_addr()?;
        tracing::info!(%addr, "listening");
        // Lets a parent process find the port when --listen used port 0.
        println!("listening on http://{addr}");
        serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
        anyhow::Ok(())
    })
}
