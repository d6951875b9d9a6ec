use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use chrono::Duration;
use clap::{Parser, Subcommand};
use observatory_cli::{fixture_cassette, init_tracing};
use observatory_core::clock::SimClock;
use observatory_core::scheduler::SchedulerConfig;
use observatory_core::simulation::{generate_graph, GraphSpec, PoolSpec, Scenario, ScenarioConfig};
use observatory_core::source::FixtureProvider;
use observatory_core::store::Store;

#[derive(Parser)]
#[command(name = "simulate", about = "Generate synthetic fixtures and replay ingest against them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a fixture directory from a JSON graph spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drive the ingest loop over a fixture under a simulated clock and
    /// write the report (counts, discovered set, event log) as JSON.
    Run {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long, default_value_t = 72)]
        hours: i64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 3)]
        credentials: usize,
        #[arg(long, default_value_t = 5000)]
        budget_per_hour: u32,
        #[arg(long, default_value_t = 0)]
        jitter_seed: u64,
        /// Keep the resulting store at this path instead of in memory.
        #[arg(long)]
        database: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    init_tracing();
    match Cli::parse().command {
        Command::Generate { spec, out } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: GraphSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
            let fixture = generate_graph(&spec)?;
            std::fs::create_dir_all(&out)?;
            fixture.write(&out)?;
            tracing::info!(
                users = fixture.data.users.len(),
                edges = fixture.data.edges.len(),
                out = %out.display(),
                "fixture written"
            );
        }
        Command::Run {
            fixture,
            hours,
            workers,
            report,
            credentials,
            budget_per_hour,
            jitter_seed,
            database,
        } => {
            let config = ScenarioConfig {
                pool: PoolSpec {
                    count: credentials,
                    budget_per_hour,
                    initially_exhausted: false,
                },
                scheduler: SchedulerConfig {
                    worker_count: workers,
                    ..SchedulerConfig::default()
                },
                duration: Duration::hours(hours),
                jitter_seed,
                ..ScenarioConfig::default()
            };
            let store = match &database {
                Some(path) => Store::open(path)?,
                None => Store::open_in_memory()?,
            };
            let clock = Arc::new(SimClock::new(config.start));
            let provider = FixtureProvider::open(&fixture, clock.clone())
                .with_context(|| format!("loading {}", fixture.display()))?;
            let geocoder = fixture_cassette(&fixture)?;
            let scenario = Scenario::assemble(Arc::new(provider), Arc::new(geocoder), Arc::new(store), clock, config)?;
            let (seed, run) = scenario.run()?;
            let out = scenario.report(seed, run)?;
            std::fs::write(&report, serde_json::to_string_pretty(&out)? + "\n")
                .with_context(|| format!("writing {}", report.display()))?;
            tracing::info!(
                processed = out.run.processed,
                discovered = out.discovered.len(),
                api_calls = out.run.api_calls,
                report = %report.display(),
                "simulation finished"
            );
        }
    }
    Ok(())
}
