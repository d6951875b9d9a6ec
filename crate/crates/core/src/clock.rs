//! Injectable time source.
//!
//! Budget windows, staleness checks and queue due times all read time from a
//! [`Clock`]. Tests and scenarios use [`SimClock`], which only moves when
//! something sleeps on it.

use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;

    /// Blocks (or advances simulated time) for `duration`.
    fn sleep(&self, duration: Duration);

    /// Sleeps until `deadline`, returning early when `stop` is raised.
    /// Returns `false` if interrupted.
    fn sleep_until(&self, deadline: DateTime<Utc>, stop: &AtomicBool) -> bool {
        loop {
            if stop.load(Ordering::SeqCst) {
                return false;
            }
            let now = self.now();
            if now >= deadline {
                return true;
            }
            let left = (deadline - now).to_std().unwrap_or_default();
            self.sleep(left.min(Duration::from_millis(200)));
        }
    }

    fn is_simulated(&self) -> bool {
        false
    }
}

/// Wall-clock time, truncated to milliseconds so values survive storage.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        truncate_millis(Utc::now())
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Discrete simulated time with millisecond resolution.
#[derive(Debug)]
pub struct SimClock {
    millis: AtomicI64,
}

impl SimClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self {
            millis: AtomicI64::new(start.timestamp_millis()),
        }
    }

    /// 2026-03-01T00:00:00Z, the default epoch for fixtures and scenarios.
    pub fn default_start() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 3, 1, 0, 0, 0).unwrap()
    }

    pub fn advance(&self, duration: Duration) {
        self.millis
            .fetch_add(duration.as_millis() as i64, Ordering::SeqCst);
    }

    /// Moves time forward to `t`; never moves backwards.
    pub fn advance_to(&self, t: DateTime<Utc>) {
        self.millis.fetch_max(t.timestamp_millis(), Ordering::SeqCst);
    }
}

impl Clock for SimClock {
    fn now(&self) -> DateTime<Utc> {
        from_millis(self.millis.load(Ordering::SeqCst))
    }

    fn sleep(&self, duration: Duration) {
        self.advance(duration);
    }

    fn sleep_until(&self, deadline: DateTime<Utc>, stop: &AtomicBool) -> bool {
        if stop.load(Ordering::SeqCst) {
            return false;
        }
        self.advance_to(deadline);
        true
    }

    fn is_simulated(&self) -> bool {
        true
    }
}

pub fn from_millis(ms: i64) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(ms)
        .single()
        .expect("timestamp in range")
}

pub fn truncate_millis(t: DateTime<Utc>) -> DateTime<Utc> {
    from_millis(t.timestamp_millis())
}

/// ISO-8601 UTC with second precision, e.g. `2026-03-01T00:00:00Z`.
pub fn iso(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
