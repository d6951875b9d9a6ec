use std::collections::BTreeSet;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::Serialize;

use super::GeneratedFixture;
use crate::clock::{Clock, SimClock};
use crate::events::{Event, EventLog};
use crate::normalize::{GeocodeCache, Geocoder, Normalizer};
use crate::scheduler::{Ingest, RunLimits, RunReport, SchedulerConfig, SchedulerError, SeedReport};
use crate::source::{ClientError, Credential, CredentialPool, FixtureProvider, Provider, SourceClient};
use crate::store::{Store, StoreCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub count: usize,
    pub budget_per_hour: u32,
    /// Every credential starts with nothing left and a reset 30 minutes out.
    pub initially_exhausted: bool,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            count: 1,
            budget_per_hour: 5000,
            initially_exhausted: false,
        }
    }
}

impl PoolSpec {
    pub fn build(&self, now: DateTime<Utc>) -> CredentialPool {
        let credentials = (1..=self.count)
            .map(|i| {
                let mut c = Credential::fresh(format!("token-{i}"), self.budget_per_hour, now);
                if self.initially_exhausted {
                    c.remaining = 0;
                    c.reset_at = now + Duration::minutes(30);
                }
                c
            })
            .collect();
        CredentialPool::new(credentials, now)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub pool: PoolSpec,
    pub scheduler: SchedulerConfig,
    pub start: DateTime<Utc>,
    /// Simulated time the run may take, measured from `start`.
    pub duration: Duration,
    pub jitter_seed: u64,
    pub record_events: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            pool: PoolSpec::default(),
            scheduler: SchedulerConfig::default(),
            start: SimClock::default_start(),
            duration: Duration::hours(72),
            jitter_seed: 0,
            record_events: true,
        }
    }
}

/// The real ingest loop wired to a fixture provider and a simulated clock.
pub struct Scenario {
    pub clock: Arc<SimClock>,
    pub store: Arc<Store>,
    pub ingest: Ingest,
    pub events: EventLog,
    pub config: ScenarioConfig,
}

impl Scenario {
    /// Serves `fixture` from an in-memory store.
    pub fn new(fixture: &GeneratedFixture, config: ScenarioConfig) -> Result<Self, SchedulerError> {
        let clock = Arc::new(SimClock::new(config.start));
        let provider = Arc::new(FixtureProvider::new(fixture.data.clone(), clock.clone()));
        Self::assemble(
            provider,
            Arc::new(fixture.geocoder()),
            Arc::new(Store::open_in_memory()?),
            clock,
            config,
        )
    }

    /// Wires an arbitrary provider, geocoder and store around `clock`.
    pub fn assemble(
        provider: Arc<dyn Provider>,
        geocoder: Arc<dyn Geocoder>,
        store: Arc<Store>,
        clock: Arc<SimClock>,
        config: ScenarioConfig,
    ) -> Result<Self, SchedulerError> {
        let events = if config.record_events {
            EventLog::enabled()
        } else {
            EventLog::disabled()
        };
        let now = clock.now();
        let client = SourceClient::new(provider, Arc::new(config.pool.build(now)), clock.clone())
            .with_events(events.clone())
            .with_jitter_seed(config.jitter_seed)
            .with_deadline(config.start + config.duration);
        let normalizer = Normalizer::new(geocoder, Arc::new(GeocodeCache::new()));
        let ingest = Ingest::new(config.scheduler.clone(), Arc::new(client), store.clone(), normalizer)?;
        Ok(Self {
            clock,
            store,
            ingest,
            events,
            config,
        })
    }

    pub fn deadline(&self) -> DateTime<Utc> {
        self.config.start + self.config.duration
    }

    /// Seeds, then runs until the deadline or until nothing is left to do.
    /// A seed that cannot finish before the deadline is reported as `None`.
    pub fn run(&self) -> Result<(Option<SeedReport>, RunReport), SchedulerError> {
        let seed = match self.ingest.seed() {
            Ok(r) => Some(r),
            Err(SchedulerError::Client(ClientError::DeadlineReached)) => None,
            Err(e) => return Err(e),
        };
        let stop = AtomicBool::new(false);
        let run = self.ingest.run(
            &stop,
            RunLimits {
                until: Some(self.deadline()),
                ..RunLimits::default()
            },
        )?;
        Ok((seed, run))
    }

    /// Logins the store knows about, retired or not.
    pub fn discovered(&self) -> Result<BTreeSet<String>, SchedulerError> {
        Ok(self.store.all_users()?.into_iter().map(|u| u.login).collect())
    }

    pub fn report(&self, seed: Option<SeedReport>, run: RunReport) -> Result<ScenarioReport, SchedulerError> {
        Ok(ScenarioReport {
            seed,
            run,
            counts: self.store.counts()?,
            discovered: self.discovered()?,
            events: self.events.snapshot(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub seed: Option<SeedReport>,
    pub run: RunReport,
    pub counts: StoreCounts,
    pub discovered: BTreeSet<String>,
    pub events: Vec<Event>,
}

impl ScenarioReport {
    /// The event log as JSON lines, one event per line.
    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

/// Builds a scenario over an in-memory store, runs it and reports.
pub fn run_scenario(fixture: &GeneratedFixture, config: ScenarioConfig) -> Result<ScenarioReport, SchedulerError> {
    let scenario = Scenario::new(fixture, config)?;
    let (seed, run) = scenario.run()?;
    scenario.report(seed, run)
}
