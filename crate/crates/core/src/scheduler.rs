//! The ingest loop: seeding, staleness, priority ordering and per-user
//! processing against a shared store.

use std::cmp::Reverse;
use std::collections::BTreeSet;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Datelike, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::events::Event;
use crate::model::{
    AccountType, Provenance, QueueEntry, UserRecord, YearActivity, FIRST_ACTIVITY_YEAR,
};
use crate::normalize::{
    classify_quality, countries, extract_pronoun_category, GeocodeError, Normalizer,
};
use crate::source::{ClientError, Direction, ProfilePayload, SourceClient};
use crate::store::{Store, StoreError, UserUpdate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedMode {
    AllSponsorable,
    TargetedFilter,
}

/// Narrows seeding to a subpopulation. Empty means "everything".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetFilter {
    pub country: Option<String>,
    pub account_type: Option<AccountType>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("active refresh interval must be shorter than the inactive one")]
    IntervalOrder,
    #[error("worker_count must be positive")]
    NoWorkers,
    #[error("unknown filter term {0:?} (expected country=NAME or type=User|Org)")]
    FilterTerm(String),
    #[error("{0:?} is not a canonical country name")]
    UnknownCountry(String),
    #[error("targeted seeding needs a non-empty filter")]
    EmptyFilter,
}

impl TargetFilter {
    /// Parses `key=value` terms such as `country=Japan` or `type=Org`.
    pub fn parse_terms<S: AsRef<str>>(terms: &[S]) -> Result<Self, ConfigError> {
        let mut filter = TargetFilter::default();
        for term in terms {
            let term = term.as_ref();
            let (key, value) = term
                .split_once('=')
                .ok_or_else(|| ConfigError::FilterTerm(term.to_string()))?;
            match key.trim() {
                "country" => {
                    let c = countries::canonicalize(value)
                        .ok_or_else(|| ConfigError::UnknownCountry(value.to_string()))?;
                    filter.country = Some(c.to_string());
                }
                "type" | "account_type" => {
                    filter.account_type = Some(
                        AccountType::from_str(value.trim())
                            .map_err(|_| ConfigError::FilterTerm(term.to_string()))?,
                    );
                }
                _ => return Err(ConfigError::FilterTerm(term.to_string())),
            }
        }
        Ok(filter)
    }

    pub fn is_empty(&self) -> bool {
        self.country.is_none() && self.account_type.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulerConfig {
    pub active_refresh_interval: Duration,
    pub inactive_refresh_interval: Duration,
    pub worker_count: usize,
    pub seed_mode: SeedMode,
    pub target_filter: TargetFilter,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            active_refresh_interval: Duration::hours(24),
            inactive_refresh_interval: Duration::hours(720),
            worker_count: 1,
            seed_mode: SeedMode::AllSponsorable,
            target_filter: TargetFilter::default(),
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.active_refresh_interval >= self.inactive_refresh_interval {
            return Err(ConfigError::IntervalOrder);
        }
        if self.worker_count == 0 {
            return Err(ConfigError::NoWorkers);
        }
        if self.seed_mode == SeedMode::TargetedFilter && self.target_filter.is_empty() {
            return Err(ConfigError::EmptyFilter);
        }
        Ok(())
    }

    pub fn refresh_interval(&self, active: bool) -> Duration {
        if active {
            self.active_refresh_interval
        } else {
            self.inactive_refresh_interval
        }
    }

    /// True when the user's data is older than its refresh interval. Users
    /// never fetched are always stale.
    pub fn is_stale(&self, user: &UserRecord, active: bool, now: DateTime<Utc>) -> bool {
        match user.last_fetched_at {
            None => true,
            Some(at) => now - at > self.refresh_interval(active),
        }
    }
}

/// Sort key for due entries; smaller sorts first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PriorityKey {
    inactive: bool,
    overdue: Reverse<i64>,
    login: String,
}

/// Active before inactive, then most overdue first, then login ascending.
pub fn compute_priority(entry: &QueueEntry, now: DateTime<Utc>) -> PriorityKey {
    PriorityKey {
        inactive: !entry.active,
        overdue: Reverse((now - entry.due_at).num_milliseconds()),
        login: entry.login.clone(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SchedulerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Geocode(#[from] GeocodeError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SeedReport {
    pub listed: usize,
    pub matched: usize,
    pub enqueued: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProcessOutcome {
    pub updated: bool,
    pub retired: bool,
    pub active: bool,
    pub new_users_discovered: usize,
    pub edges_added: usize,
    pub edges_retired: usize,
    pub activity_fetches: usize,
}

/// Why a single user's processing stopped without an update.
#[derive(Debug, thiserror::Error)]
pub enum ProcessError {
    /// Provider or geocoder kept failing; retry later.
    #[error("transient failure: {0}")]
    Transient(String),
    /// The run was told to stop (signal or scenario deadline).
    #[error("interrupted")]
    Interrupted,
    /// The fetched data cannot be stored; retry at the next refresh.
    #[error("rejected: {0}")]
    Rejected(String),
    /// The store could not be reached.
    #[error(transparent)]
    Store(StoreError),
    /// Configuration problem that retrying will not fix.
    #[error(transparent)]
    Fatal(ClientError),
}

impl From<StoreError> for ProcessError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Sqlite(_) | StoreError::BadUrl(_) => ProcessError::Store(e),
            other => ProcessError::Rejected(other.to_string()),
        }
    }
}

impl From<ClientError> for ProcessError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::DeadlineReached | ClientError::Interrupted => ProcessError::Interrupted,
            ClientError::Budget(_) => ProcessError::Fatal(e),
            ClientError::YearOutOfRange(_) | ClientError::Fatal(_) => ProcessError::Rejected(e.to_string()),
            other => ProcessError::Transient(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLimits {
    /// Stop once the clock reaches this instant.
    pub until: Option<DateTime<Utc>>,
    /// Stop as soon as nothing is due.
    pub stop_when_idle: bool,
    /// Stop after this many processing attempts.
    pub max_steps: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Signal,
    Deadline,
    Idle,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub processed: u64,
    pub retired: u64,
    pub failed: u64,
    pub discovered: u64,
    pub edges_added: u64,
    pub edges_retired: u64,
    pub store_retries: u64,
    pub api_calls: u64,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub stop_reason: StopReason,
}

/// Everything the ingest loop needs, bundled.
#[derive(Clone)]
pub struct Ingest {
    pub config: SchedulerConfig,
    pub client: Arc<SourceClient>,
    pub store: Arc<Store>,
    pub normalizer: Normalizer,
}

const STORE_RETRY_BASE_SECS: i64 = 1;
const STORE_RETRY_MAX_SECS: i64 = 60;

impl Ingest {
    /// Validates the config and warms the geocode cache from the store.
    pub fn new(
        config: SchedulerConfig,
        client: Arc<SourceClient>,
        store: Arc<Store>,
        normalizer: Normalizer,
    ) -> Result<Self, SchedulerError> {
        config.validate()?;
        normalizer.cache().preload(store.load_geocode_cache()?);
        Ok(Self {
            config,
            client,
            store,
            normalizer,
        })
    }

    fn now(&self) -> DateTime<Utc> {
        self.client.clock().now()
    }

    /// Enqueues every listed sponsorable account (narrowed by the target
    /// filter in targeted mode) with `due_at = now`. Nothing is written if
    /// listing fails. Existing entries are left alone.
    pub fn seed(&self) -> Result<SeedReport, SchedulerError> {
        let listed = self.client.list_sponsorable()?;
        let now = self.now();
        let mut seeds = Vec::new();
        for profile in &listed {
            if !profile.sponsorable || !self.matches_filter(profile, now)? {
                continue;
            }
            let mut stub = UserRecord::stub(&profile.login, now);
            stub.account_type = profile.account_type;
            stub.sponsorable = true;
            let entry = QueueEntry {
                login: profile.login.clone(),
                due_at: now,
                active: false,
                discovered_via: None,
                enqueued_at: now,
            };
            seeds.push((stub, entry));
        }
        let enqueued = self.store.seed_users(&seeds)?;
        self.store.save_geocode_entries(&self.normalizer.cache().take_dirty())?;
        for (_, entry) in &seeds {
            self.client.events().record(Event::Enqueue {
                at: now,
                login: entry.login.clone(),
                due_at: entry.due_at,
                discovered_via: None,
            });
        }
        Ok(SeedReport {
            listed: listed.len(),
            matched: seeds.len(),
            enqueued,
        })
    }

    fn matches_filter(&self, profile: &ProfilePayload, now: DateTime<Utc>) -> Result<bool, SchedulerError> {
        if self.config.seed_mode == SeedMode::AllSponsorable {
            return Ok(true);
        }
        let filter = &self.config.target_filter;
        if filter.account_type.is_some_and(|t| t != profile.account_type) {
            return Ok(false);
        }
        if let Some(country) = &filter.country {
            let raw = profile.location.as_deref().unwrap_or("");
            let norm = self.normalizer.normalize_location(raw, now)?;
            return Ok(norm.geo().is_some_and(|g| &g.country == country));
        }
        Ok(true)
    }

    /// Fetches everything for `login`, then applies it in one store
    /// transaction. A missing account is retired.
    pub fn process_user(&self, login: &str) -> Result<ProcessOutcome, ProcessError> {
        let existing = self.store.get_user(login)?;
        let profile = match self.client.fetch_profile(login) {
            Err(ClientError::NotFound) => return self.retire(login),
            other => other?,
        };
        let mut observed = Vec::with_capacity(2);
        for direction in Direction::BOTH {
            match self.client.fetch_all_edges(login, direction) {
                Err(ClientError::NotFound) => return self.retire(login),
                other => observed.push(other?.into_iter().collect::<BTreeSet<_>>()),
            }
        }
        let activity = if profile.account_type == AccountType::User {
            let complete = self.store.complete_years(login)?;
            let mut out = Vec::new();
            let first = profile.created_at.year().max(FIRST_ACTIVITY_YEAR);
            let last = self.now().year();
            for year in (first..=last).filter(|y| !complete.contains(y)) {
                let payload = match self.client.fetch_activity_year(login, year) {
                    Err(ClientError::NotFound) => return self.retire(login),
                    other => other?,
                };
                out.push(YearActivity {
                    login: login.to_string(),
                    year,
                    commits: payload.commits,
                    pull_requests: payload.pull_requests,
                    issues: payload.issues,
                    reviews: payload.reviews,
                    complete: year < self.now().year(),
                });
            }
            out
        } else {
            Vec::new()
        };

        let now = self.now();
        let location = self
            .normalizer
            .normalize_location(profile.location.as_deref().unwrap_or(""), now)
            .map_err(|e| ProcessError::Transient(e.to_string()))?;
        let record = build_record(&profile, existing.as_ref(), location.geo().cloned(), now);
        let sponsored_by = observed.pop().expect("two directions");
        let sponsors_of = observed.pop().expect("two directions");
        let update = UserUpdate {
            record,
            sponsors_of,
            sponsored_by,
            activity,
            geocode: self.normalizer.cache().take_dirty(),
            now,
        };
        let activity_fetches = update.activity.len();
        let applied = self
            .store
            .apply_user_update(&update, |active| now + self.config.refresh_interval(active))?;

        let events = self.client.events();
        for other in &applied.discovered {
            events.record(Event::Enqueue {
                at: now,
                login: other.clone(),
                due_at: now,
                discovered_via: Some(login.to_string()),
            });
        }
        events.record(Event::Processed {
            at: now,
            login: login.to_string(),
            active: applied.active,
        });
        events.record(Event::Enqueue {
            at: now,
            login: login.to_string(),
            due_at: now + self.config.refresh_interval(applied.active),
            discovered_via: None,
        });
        Ok(ProcessOutcome {
            updated: true,
            retired: false,
            active: applied.active,
            new_users_discovered: applied.discovered.len(),
            edges_added: applied.edges_added,
            edges_retired: applied.edges_retired,
            activity_fetches,
        })
    }

    fn retire(&self, login: &str) -> Result<ProcessOutcome, ProcessError> {
        let now = self.now();
        let ended = self.store.retire_user(login, now)?;
        self.client.events().record(Event::Retired {
            at: now,
            login: login.to_string(),
        });
        Ok(ProcessOutcome {
            retired: true,
            edges_retired: ended,
            ..ProcessOutcome::default()
        })
    }

    /// Delay before retrying a user whose fetch kept failing.
    fn failure_delay(&self) -> Duration {
        let policy = crate::source::BackoffPolicy::default();
        Duration::from_std(policy.cap(policy.max_attempts - 1)).unwrap_or(Duration::seconds(64))
    }

    /// Processes due entries in priority order until a limit or the stop
    /// signal is hit. Sleeps until the next due time when idle.
    pub fn run(&self, stop: &AtomicBool, limits: RunLimits) -> Result<RunReport, SchedulerError> {
        let started_at = self.now();
        let calls_before = self.client.api_calls();
        let mut report = RunReport {
            processed: 0,
            retired: 0,
            failed: 0,
            discovered: 0,
            edges_added: 0,
            edges_retired: 0,
            store_retries: 0,
            api_calls: 0,
            started_at,
            finished_at: started_at,
            stop_reason: StopReason::Idle,
        };
        let mut store_failures = 0u32;
        let mut steps = 0u64;
        let reason = loop {
            if stop.load(Ordering::SeqCst) {
                break StopReason::Signal;
            }
            if limits.max_steps.is_some_and(|m| steps >= m) {
                break StopReason::MaxSteps;
            }
            let now = self.now();
            if limits.until.is_some_and(|u| now >= u) {
                break StopReason::Deadline;
            }
            let batch_size = match limits.max_steps {
                Some(m) => self.config.worker_count.min((m - steps) as usize),
                None => self.config.worker_count,
            };
            let due = match self.store.due_users(now, batch_size) {
                Ok(d) => d,
                Err(e) => {
                    report.store_retries += 1;
                    tracing::warn!(error = %e, "store unavailable, backing off");
                    if !self.store_backoff(&mut store_failures, stop) {
                        break StopReason::Signal;
                    }
                    continue;
                }
            };
            if due.is_empty() {
                if limits.stop_when_idle {
                    break StopReason::Idle;
                }
                let next = self.store.earliest_due().ok().flatten();
                let wake = match (next, limits.until) {
                    (Some(n), Some(u)) => n.min(u),
                    (Some(n), None) => n,
                    (None, Some(u)) => u,
                    (None, None) if self.client.clock().is_simulated() => break StopReason::Idle,
                    (None, None) => now + Duration::seconds(60),
                };
                if !self.client.clock().sleep_until(wake, stop) {
                    break StopReason::Signal;
                }
                continue;
            }

            let results = self.process_batch(&due);
            let mut interrupted = false;
            let mut store_down = false;
            for (entry, result) in due.iter().zip(results) {
                steps += 1;
                match result {
                    Ok(outcome) => {
                        store_failures = 0;
                        if outcome.retired {
                            report.retired += 1;
                        } else {
                            report.processed += 1;
                        }
                        report.discovered += outcome.new_users_discovered as u64;
                        report.edges_added += outcome.edges_added as u64;
                        report.edges_retired += outcome.edges_retired as u64;
                    }
                    Err(ProcessError::Interrupted) => interrupted = true,
                    Err(ProcessError::Store(e)) => {
                        tracing::warn!(login = %entry.login, error = %e, "store write failed");
                        store_down = true;
                    }
                    Err(ProcessError::Fatal(e)) => return Err(e.into()),
                    Err(e) => {
                        report.failed += 1;
                        let now = self.now();
                        let retry_at = match e {
                            ProcessError::Transient(_) => now + self.failure_delay(),
                            _ => now + self.config.refresh_interval(entry.active),
                        };
                        self.client.events().record(Event::Failed {
                            at: now,
                            login: entry.login.clone(),
                            reason: e.to_string(),
                        });
                        if let Err(err) = self.store.defer(&entry.login, retry_at) {
                            tracing::warn!(login = %entry.login, error = %err, "could not defer entry");
                            store_down = true;
                        }
                    }
                }
            }
            if interrupted {
                let deadline_hit = self.client.deadline().is_some_and(|d| self.now() >= d)
                    || limits.until.is_some_and(|u| self.now() >= u);
                break if deadline_hit { StopReason::Deadline } else { StopReason::Signal };
            }
            if store_down {
                report.store_retries += 1;
                if !self.store_backoff(&mut store_failures, stop) {
                    break StopReason::Signal;
                }
            }
        };
        report.stop_reason = reason;
        report.finished_at = self.now();
        report.api_calls = self.client.api_calls() - calls_before;
        Ok(report)
    }

    /// Real clocks fan the batch out to worker threads; the simulated clock
    /// runs it in order so results stay deterministic.
    fn process_batch(&self, due: &[QueueEntry]) -> Vec<Result<ProcessOutcome, ProcessError>> {
        if due.len() == 1 || self.client.clock().is_simulated() {
            return due.iter().map(|e| self.process_user(&e.login)).collect();
        }
        std::thread::scope(|scope| {
            let handles: Vec<_> = due
                .iter()
                .map(|e| scope.spawn(move || self.process_user(&e.login)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                .collect()
        })
    }

    fn store_backoff(&self, failures: &mut u32, stop: &AtomicBool) -> bool {
        let secs = (STORE_RETRY_BASE_SECS << (*failures).min(6)).min(STORE_RETRY_MAX_SECS);
        *failures += 1;
        let clock = self.client.clock();
        clock.sleep_until(clock.now() + Duration::seconds(secs), stop)
    }
}

fn build_record(
    profile: &ProfilePayload,
    existing: Option<&UserRecord>,
    geo: Option<crate::model::GeoResolution>,
    now: DateTime<Utc>,
) -> UserRecord {
    let pronouns_raw = profile
        .pronouns
        .as_ref()
        .filter(|p| !p.trim().is_empty())
        .cloned();
    let pronoun_category = extract_pronoun_category(pronouns_raw.as_deref());
    UserRecord {
        login: profile.login.clone(),
        account_type: profile.account_type,
        display_name: profile.display_name.clone(),
        location_raw: profile.location.clone(),
        quality_flag: classify_quality(pronoun_category, geo.as_ref()),
        geo,
        pronouns_raw,
        pronoun_category,
        sponsor_count: profile.sponsor_count,
        sponsoring_count: profile.sponsoring_count,
        sponsorable: profile.sponsorable,
        min_tier_cents: profile.min_tier_cents,
        created_at: Some(profile.created_at),
        first_seen_at: existing.map_or(now, |u| u.first_seen_at.min(now)),
        last_fetched_at: Some(now),
        provenance: Provenance::Fetched,
        retired: false,
    }
}

#[cfg(test)]
mod tests;
