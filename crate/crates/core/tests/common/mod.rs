#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use chrono::Duration;
use observatory_core::clock::SimClock;
use observatory_core::normalize::CassetteGeocoder;
use observatory_core::scheduler::SchedulerConfig;
use observatory_core::simulation::{PoolSpec, Scenario, ScenarioConfig};
use observatory_core::source::{FixtureData, FixtureProvider};
use observatory_core::store::Store;

pub fn basic_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/basic")
}

pub fn basic_fixture() -> FixtureData {
    FixtureData::load(&basic_dir()).unwrap()
}

pub fn config(scheduler: SchedulerConfig, hours: i64) -> ScenarioConfig {
    ScenarioConfig {
        pool: PoolSpec {
            count: 3,
            budget_per_hour: 5000,
            initially_exhausted: false,
        },
        scheduler,
        duration: Duration::hours(hours),
        ..ScenarioConfig::default()
    }
}

/// A scenario over `data` that keeps a handle on the fixture provider so
/// tests can change upstream data between fetches.
pub fn harness(data: FixtureData, config: ScenarioConfig) -> (Scenario, Arc<FixtureProvider>) {
    let clock = Arc::new(SimClock::new(config.start));
    let provider = Arc::new(FixtureProvider::new(data, clock.clone()));
    let scenario = Scenario::assemble(
        provider.clone(),
        Arc::new(CassetteGeocoder::bundled()),
        Arc::new(Store::open_in_memory().unwrap()),
        clock,
        config,
    )
    .unwrap();
    (scenario, provider)
}
