use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{Context, Result};
use chrono::Duration;
use clap::{Parser, Subcommand};
use observatory_cli::{geocoder, init_tracing, open_store, provider, SourceMode};
use observatory_core::clock::{Clock, SimClock, SystemClock};
use observatory_core::normalize::{GeocodeCache, Normalizer};
use observatory_core::scheduler::{Ingest, RunLimits, SchedulerConfig, SeedMode, TargetFilter};
use observatory_core::source::SourceClient;
use observatory_core::store::Store;

#[derive(Parser)]
#[command(name = "ingest", about = "Crawl the sponsorship graph into the store")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ingest loop. Seeds first when the queue is empty.
    Run {
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Fixture directory; implies fixture mode.
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// Advance a simulated clock instead of sleeping. Without --hours the
        /// run ends once nothing is due.
        #[arg(long)]
        simulated_clock: bool,
        /// Stop after this many hours of (simulated or wall) time.
        #[arg(long)]
        hours: Option<i64>,
    },
    /// Enqueue sponsorable accounts, optionally narrowed by
    /// `--filter country=X` or `--filter type=User`.
    Seed {
        #[arg(long = "filter", value_name = "KEY=VALUE")]
        filters: Vec<String>,
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Queue depth, due counts and processed totals as JSON.
    Status,
    /// Freeze the current store contents into a new snapshot.
    Snapshot {
        #[arg(long, default_value = concat!("ingest/", env!("CARGO_PKG_VERSION")))]
        collector_version: String,
    },
}

fn build(
    mode: &SourceMode,
    config: SchedulerConfig,
    store: Arc<Store>,
    clock: Arc<dyn Clock>,
    stop: Arc<AtomicBool>,
) -> Result<Ingest> {
    let (provider, pool) = provider(mode, clock.clone())?;
    let client = SourceClient::new(provider, Arc::new(pool), clock).with_stop(stop);
    let normalizer = Normalizer::new(geocoder(mode)?, Arc::new(GeocodeCache::new()));
    Ok(Ingest::new(config, Arc::new(client), store, normalizer)?)
}

fn stop_on_ctrl_c() -> Result<Arc<AtomicBool>> {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    ctrlc::set_handler(move || {
        tracing::info!("stopping after the current user");
        flag.store(true, Ordering::SeqCst);
    })
    .context("installing the interrupt handler")?;
    Ok(stop)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<()> {
    init_tracing();
    let cli = Cli::parse();
    let store = open_store()?;
    match cli.command {
        Command::Run {
            workers,
            fixture,
            simulated_clock,
            hours,
        } => {
            let mode = SourceMode::from_env(fixture)?;
            if simulated_clock && mode == SourceMode::Live {
                anyhow::bail!("--simulated-clock needs fixture mode");
            }
            let clock: Arc<dyn Clock> = if simulated_clock {
                Arc::new(SimClock::new(SimClock::default_start()))
            } else {
                Arc::new(SystemClock)
            };
            let config = SchedulerConfig {
                worker_count: workers,
                ..SchedulerConfig::default()
            };
            let stop = stop_on_ctrl_c()?;
            let ingest = build(&mode, config, store.clone(), clock.clone(), stop.clone())?;
            if store.queue()?.is_empty() {
                let seeded = ingest.seed()?;
                tracing::info!(?seeded, "seeded");
            }
            let limits = RunLimits {
                until: hours.map(|h| clock.now() + Duration::hours(h)),
                stop_when_idle: simulated_clock && hours.is_none(),
                ..RunLimits::default()
            };
            let report = ingest.run(&stop, limits)?;
            print_json(&report)?;
        }
        Command::Seed { filters, fixture } => {
            let mode = SourceMode::from_env(fixture)?;
            let target_filter = TargetFilter::parse_terms(&filters)?;
            let config = SchedulerConfig {
                seed_mode: if target_filter.is_empty() {
                    SeedMode::AllSponsorable
                } else {
                    SeedMode::TargetedFilter
                },
                target_filter,
                ..SchedulerConfig::default()
            };
            let ingest = build(&mode, config, store, Arc::new(SystemClock), stop_on_ctrl_c()?)?;
            print_json(&ingest.seed()?)?;
        }
        Command::Status => {
            let now = SystemClock.now();
            print_json(&serde_json::json!({
                "counts": store.counts()?,
                "queue_depth": store.queue()?.len(),
                "due_now": store.due_count(now)?,
                "earliest_due": store.earliest_due()?,
                "snapshots": store.snapshots()?.len(),
            }))?;
        }
        Command::Snapshot { collector_version } => {
            print_json(&store.create_snapshot(SystemClock.now(), &collector_version)?)?;
        }
    }
    Ok(())
}
