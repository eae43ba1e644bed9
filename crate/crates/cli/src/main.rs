use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use expert_game::analysis::{load_series_dir, MetricsBundle, TypeFilter};
use expert_game::sim::{run_replicas, write_outputs, SeriesConfig};
use expert_game_service::server::{serve, AppState};

/// Overrides `master_seed` from the config file.
const SEED_VAR: &str = "EXPERT_GAME_SEED";

#[derive(Parser)]
#[command(name = "expert-game", version, about = "Simulate and analyze the expert game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run agent-only series and write JSONL logs plus manifest.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute network and rate metrics over a directory of series logs.
    Analyze {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// q, replies or all.
        #[arg(long, default_value = "all")]
        type_filter: TypeFilter,
    },
    /// Host live sessions over websocket and HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Where finished series are written.
        #[arg(long, default_value = "sessions")]
        log_dir: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<SeriesConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config: SeriesConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Ok(v) = std::env::var(SEED_VAR) {
        config.master_seed = v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_VAR} must be an unsigned integer, got {v:?}"))?;
    }
    Ok(config)
}

fn simulate(config: PathBuf, out: PathBuf) -> Result<()> {
    let config = load_config(&config)?;
    let series = run_replicas(&config)?;
    let manifest = write_outputs(&config, &series, &out)?;
    println!(
        "wrote {} series (master seed {}) to {}",
        manifest.replicas.len(),
        config.master_seed,
        out.display()
    );
    Ok(())
}

fn analyze(logs: PathBuf, out: PathBuf, filter: TypeFilter) -> Result<()> {
    let series = load_series_dir(&logs).with_context(|| format!("loading {}", logs.display()))?;
    if series.is_empty() {
        bail!("no .jsonl logs in {}", logs.display());
    }
    let bundle = MetricsBundle::compute(&series, filter)?;
    bundle.write(&out)?;
    println!("analyzed {} series into {}", series.len(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, out } => simulate(config, out),
        Command::Analyze { logs, out, type_filter } => analyze(logs, out, type_filter),
        Command::Serve { addr, log_dir } => {
            fs::create_dir_all(&log_dir)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let (tx, rx) = tokio::sync::oneshot::channel();
                let server = tokio::spawn(serve(addr, AppState::new(Some(log_dir)), Some(tx)));
                if let Ok(bound) = rx.await {
                    println!("listening on {bound}");
                }
                server.await?.map_err(anyhow::Error::from)
            })
        }
    }
}
