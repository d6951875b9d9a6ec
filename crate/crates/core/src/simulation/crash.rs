use std::collections::BTreeSet;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{GeneratedFixture, Scenario, ScenarioConfig};
use crate::clock::SimClock;
use crate::scheduler::SchedulerError;
use crate::source::{
    ActivityPayload, Direction, EdgePage, FixtureProvider, ProfilePayload, Provider, ProviderError, ProviderResponse,
    SeedPage,
};
use crate::store::{Store, StoreDump};

/// Payload of the unwind raised by [`CrashingProvider`].
#[derive(Debug)]
pub struct Crash {
    pub at_call: u64,
}

/// Wraps a provider and unwinds out of the ingest loop when the shared call
/// counter reaches `crash_at`, standing in for a killed process.
pub struct CrashingProvider {
    inner: Arc<dyn Provider>,
    calls: Arc<AtomicU64>,
    crash_at: Option<u64>,
}

impl CrashingProvider {
    pub fn new(inner: Arc<dyn Provider>, calls: Arc<AtomicU64>, crash_at: Option<u64>) -> Self {
        Self { inner, calls, crash_at }
    }

    fn tick(&self) {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if self.crash_at == Some(n) {
            // resume_unwind skips the panic hook, so crashes stay quiet.
            resume_unwind(Box::new(Crash { at_call: n }));
        }
    }
}

impl Provider for CrashingProvider {
    fn list_sponsorable_page(&self, token_id: &str, cursor: Option<&str>) -> Result<ProviderResponse<SeedPage>, ProviderError> {
        self.tick();
        self.inner.list_sponsorable_page(token_id, cursor)
    }

    fn fetch_profile(&self, token_id: &str, login: &str) -> Result<ProviderResponse<ProfilePayload>, ProviderError> {
        self.tick();
        self.inner.fetch_profile(token_id, login)
    }

    fn fetch_edges_page(
        &self,
        token_id: &str,
        login: &str,
        direction: Direction,
        cursor: Option<&str>,
    ) -> Result<ProviderResponse<EdgePage>, ProviderError> {
        self.tick();
        self.inner.fetch_edges_page(token_id, login, direction, cursor)
    }

    fn fetch_activity_year(
        &self,
        token_id: &str,
        login: &str,
        year: i32,
    ) -> Result<ProviderResponse<ActivityPayload>, ProviderError> {
        self.tick();
        self.inner.fetch_activity_year(token_id, login, year)
    }
}

/// Final state of a (possibly interrupted) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOutcome {
    pub discovered: BTreeSet<String>,
    pub dump: StoreDump,
    /// Provider calls at which the loop was killed.
    pub crashes: Vec<u64>,
    pub provider_calls: u64,
}

/// Runs the scenario against a database file, killing the loop at each
/// provider call number in `crash_points` and restarting it from the file
/// with the same simulated clock. An empty list is the uninterrupted run.
pub fn run_with_crashes(
    fixture: &GeneratedFixture,
    config: &ScenarioConfig,
    db_path: &Path,
    crash_points: &[u64],
) -> Result<RecoveryOutcome, SchedulerError> {
    let clock = Arc::new(SimClock::new(config.start));
    let inner: Arc<dyn Provider> = Arc::new(FixtureProvider::new(fixture.data.clone(), clock.clone()));
    let calls = Arc::new(AtomicU64::new(0));
    let mut points: Vec<u64> = crash_points.to_vec();
    points.sort_unstable();
    points.dedup();
    let mut pending = points.into_iter().peekable();
    let mut crashes = Vec::new();
    loop {
        let crash_at = pending.peek().copied();
        let store = Arc::new(Store::open(db_path)?);
        let provider = Arc::new(CrashingProvider::new(inner.clone(), calls.clone(), crash_at));
        let scenario = Scenario::assemble(
            provider,
            Arc::new(fixture.geocoder()),
            store,
            clock.clone(),
            ScenarioConfig {
                record_events: false,
                ..config.clone()
            },
        )?;
        match catch_unwind(AssertUnwindSafe(|| scenario.run())) {
            Ok(result) => {
                result?;
                let outcome = RecoveryOutcome {
                    discovered: scenario.discovered()?,
                    dump: scenario.store.dump()?,
                    crashes,
                    provider_calls: calls.load(Ordering::SeqCst),
                };
                return Ok(outcome);
            }
            Err(payload) => match payload.downcast::<Crash>() {
                Ok(crash) => {
                    crashes.push(crash.at_call);
                    pending.next();
                }
                Err(other) => resume_unwind(other),
            },
        }
    }
}
