use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::credentials::{AcquireError, Acquisition, CredentialPool, Slot};
use super::{
    ActivityPayload, Direction, EdgePage, ProfilePayload, Provider, ProviderError,
    ProviderResponse, RateState,
};
use crate::clock::Clock;
use crate::events::{Event, EventLog, FetchKind};

/// Exponential backoff with full jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackoffPolicy {
    pub base: Duration,
    pub factor: u32,
    pub max_attempts: u32,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(2),
            factor: 2,
            max_attempts: 6,
        }
    }
}

impl BackoffPolicy {
    /// Upper bound of the delay after failed attempt number `attempt`
    /// (0-based).
    pub fn cap(&self, attempt: u32) -> Duration {
        self.base * self.factor.saturating_pow(attempt)
    }

    pub fn delay<R: Rng>(&self, attempt: u32, rng: &mut R) -> Duration {
        let cap = self.cap(attempt).as_millis() as u64;
        Duration::from_millis(rng.random_range(0..=cap))
    }

    /// Worst-case total sleep across all retries.
    pub fn max_total_delay(&self) -> Duration {
        (0..self.max_attempts.saturating_sub(1)).map(|a| self.cap(a)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    #[error("account not found")]
    NotFound,
    #[error("gave up after {attempts} attempts: {message}")]
    Transient { attempts: u32, message: String },
    #[error(transparent)]
    YearOutOfRange(ProviderError),
    #[error(transparent)]
    Budget(#[from] AcquireError),
    #[error("scenario deadline reached")]
    DeadlineReached,
    #[error("interrupted by stop signal")]
    Interrupted,
    #[error("invalid pagination cursor")]
    InvalidCursor,
    #[error("pagination kept failing for {0}")]
    Pagination(String),
    #[error("{0}")]
    Fatal(String),
}

impl ClientError {
    /// Failures after which the caller should requeue rather than give up.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            ClientError::Transient { .. } | ClientError::Pagination(_)
        )
    }
}

/// A provider bound to the shared credential pool, clock and retry policy.
pub struct SourceClient {
    provider: Arc<dyn Provider>,
    pool: Arc<CredentialPool>,
    clock: Arc<dyn Clock>,
    backoff: BackoffPolicy,
    rng: Mutex<ChaCha8Rng>,
    events: EventLog,
    deadline: Option<DateTime<Utc>>,
    stop: Option<Arc<AtomicBool>>,
    calls: AtomicU64,
}

impl SourceClient {
    pub fn new(provider: Arc<dyn Provider>, pool: Arc<CredentialPool>, clock: Arc<dyn Clock>) -> Self {
        Self {
            provider,
            pool,
            clock,
            backoff: BackoffPolicy::default(),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(0)),
            events: EventLog::disabled(),
            deadline: None,
            stop: None,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_backoff(mut self, backoff: BackoffPolicy) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_jitter_seed(self, seed: u64) -> Self {
        *self.rng.lock().expect("rng poisoned") = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn with_events(mut self, events: EventLog) -> Self {
        self.events = events;
        self
    }

    /// No budget wait may extend past `deadline`.
    pub fn with_deadline(mut self, deadline: DateTime<Utc>) -> Self {
        self.deadline = Some(deadline);
        self
    }

    pub fn with_stop(mut self, stop: Arc<AtomicBool>) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn pool(&self) -> &Arc<CredentialPool> {
        &self.pool
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    pub fn deadline(&self) -> Option<DateTime<Utc>> {
        self.deadline
    }

    /// Requests issued so far, retries included.
    pub fn api_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn fetch_profile(&self, login: &str) -> Result<ProfilePayload, ClientError> {
        self.call(FetchKind::Profile, login, |token| {
            self.provider.fetch_profile(token, login)
        })
    }

    pub fn fetch_sponsor_edges_page(
        &self,
        login: &str,
        direction: Direction,
        cursor: Option<&str>,
    ) -> Result<EdgePage, ClientError> {
        self.call(FetchKind::Edges, login, |token| {
            self.provider.fetch_edges_page(token, login, direction, cursor)
        })
    }

    /// Walks every page for (`login`, `direction`). An invalid cursor restarts
    /// from the first page.
    pub fn fetch_all_edges(
        &self,
        login: &str,
        direction: Direction,
    ) -> Result<Vec<(String, String)>, ClientError> {
        const MAX_RESTARTS: u32 = 3;
        let mut restarts = 0;
        'restart: loop {
            let mut edges = Vec::new();
            let mut cursor: Option<String> = None;
            loop {
                match self.fetch_sponsor_edges_page(login, direction, cursor.as_deref()) {
                    Ok(page) => {
                        edges.extend(page.edges);
                        match page.next_cursor {
                            Some(next) => cursor = Some(next),
                            None => return Ok(edges),
                        }
                    }
                    Err(ClientError::InvalidCursor) => {
                        restarts += 1;
                        if restarts > MAX_RESTARTS {
                            return Err(ClientError::Pagination(login.to_string()));
                        }
                        continue 'restart;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }

    pub fn fetch_activity_year(&self, login: &str, year: i32) -> Result<ActivityPayload, ClientError> {
        self.call(FetchKind::Activity, login, |token| {
            self.provider.fetch_activity_year(token, login, year)
        })
    }

    /// Every sponsorable account the provider lists.
    pub fn list_sponsorable(&self) -> Result<Vec<ProfilePayload>, ClientError> {
        let mut out = Vec::new();
        let mut cursor: Option<String> = None;
        loop {
            let page = self.call(FetchKind::Seed, "", |token| {
                self.provider.list_sponsorable_page(token, cursor.as_deref())
            })?;
            out.extend(page.profiles);
            match page.next_cursor {
                Some(next) => cursor = Some(next),
                None => return Ok(out),
            }
        }
    }

    fn call<T>(
        &self,
        kind: FetchKind,
        login: &str,
        request: impl Fn(&str) -> Result<ProviderResponse<T>, ProviderError>,
    ) -> Result<T, ClientError> {
        let mut attempt = 0u32;
        loop {
            let slot = self.acquire(1)?;
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.events.record(Event::Fetch {
                at: self.clock.now(),
                kind,
                login: login.to_string(),
            });
            let err = match request(&slot.token_id) {
                Ok(resp) => {
                    if let Some(state) = resp.rate_state {
                        self.pool.reconcile(&slot.token_id, state, self.clock.now());
                    }
                    return Ok(resp.payload);
                }
                Err(e) => e,
            };
            attempt += 1;
            match err {
                ProviderError::NotFound => return Err(ClientError::NotFound),
                ProviderError::InvalidCursor => return Err(ClientError::InvalidCursor),
                e @ ProviderError::YearOutOfRange { .. } => return Err(ClientError::YearOutOfRange(e)),
                ProviderError::Fatal(m) => return Err(ClientError::Fatal(m)),
                ProviderError::Transient(message) => {
                    if attempt >= self.backoff.max_attempts {
                        return Err(ClientError::Transient { attempts: attempt, message });
                    }
                    let delay = {
                        let mut rng = self.rng.lock().expect("rng poisoned");
                        self.backoff.delay(attempt - 1, &mut *rng)
                    };
                    self.sleep_until(self.clock.now() + chrono::Duration::from_std(delay).unwrap_or_default())?;
                }
                ProviderError::RateLimited { reset_at } => {
                    self.pool.reconcile(
                        &slot.token_id,
                        RateState { remaining: 0, reset_at },
                        self.clock.now(),
                    );
                    if attempt >= self.backoff.max_attempts {
                        return Err(ClientError::Transient {
                            attempts: attempt,
                            message: "rate limited".into(),
                        });
                    }
                    self.sleep_until(reset_at + chrono::Duration::seconds(1))?;
                }
            }
        }
    }

    fn acquire(&self, cost: u32) -> Result<Slot, ClientError> {
        loop {
            self.check_stop()?;
            let now = self.clock.now();
            match self.pool.try_acquire(cost, now)? {
                Acquisition::Granted(slot) => {
                    self.events.record(Event::Grant {
                        at: now,
                        token_id: slot.token_id.clone(),
                        cost: slot.cost,
                    });
                    return Ok(slot);
                }
                Acquisition::Wait { until, .. } => {
                    self.events.record(Event::Wait { at: now, until });
                    self.sleep_until(until)?;
                }
            }
        }
    }

    fn sleep_until(&self, until: DateTime<Utc>) -> Result<(), ClientError> {
        if let Some(deadline) = self.deadline {
            if until > deadline {
                let never = AtomicBool::new(false);
                self.clock
                    .sleep_until(deadline, self.stop.as_deref().unwrap_or(&never));
                return Err(ClientError::DeadlineReached);
            }
        }
        let never = AtomicBool::new(false);
        if self
            .clock
            .sleep_until(until, self.stop.as_deref().unwrap_or(&never))
        {
            Ok(())
        } else {
            Err(ClientError::Interrupted)
        }
    }

    fn check_stop(&self) -> Result<(), ClientError> {
        if self.stop.as_ref().is_some_and(|s| s.load(Ordering::SeqCst)) {
            return Err(ClientError::Interrupted);
        }
        Ok(())
    }
}
