//! Credential pool with per-token hourly budgets.
//!
//! Each credential keeps a log of its grants over the trailing hour, so the
//! cost granted inside any sliding one-hour window never exceeds the budget.
//! A credential's `reset_at` is the instant its oldest outstanding grant
//! leaves the window.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};

use super::RateState;
use crate::clock::{from_millis, Clock};

pub const DEFAULT_BUDGET_PER_HOUR: u32 = 5000;

const WINDOW_MS: i64 = 3_600_000;

/// Point-in-time view of one credential's budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credential {
    pub token_id: String,
    pub budget_per_hour: u32,
    pub remaining: u32,
    pub reset_at: DateTime<Utc>,
}

impl Credential {
    pub fn fresh(token_id: impl Into<String>, budget_per_hour: u32, now: DateTime<Utc>) -> Self {
        Self {
            token_id: token_id.into(),
            budget_per_hour,
            remaining: budget_per_hour,
            reset_at: now,
        }
    }
}

/// Picks the credential to spend from next.
///
/// Highest remaining budget wins, ties go to the lowest `token_id`. When every
/// credential is exhausted the one that resets first is returned. `None` only
/// for an empty pool.
pub fn select_credential(pool: &[Credential], _now: DateTime<Utc>) -> Option<&Credential> {
    if pool.iter().all(|c| c.remaining == 0) {
        return pool
            .iter()
            .min_by(|a, b| a.reset_at.cmp(&b.reset_at).then(a.token_id.cmp(&b.token_id)));
    }
    pool.iter().min_by(|a, b| {
        b.remaining
            .cmp(&a.remaining)
            .then_with(|| a.token_id.cmp(&b.token_id))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AcquireError {
    #[error("cost {cost} exceeds every credential's hourly budget")]
    UnsatisfiableCost { cost: u32 },
    #[error("credential pool is empty")]
    EmptyPool,
}

/// A granted request slot, already charged against `token_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub token_id: String,
    pub cost: u32,
    pub granted_at: DateTime<Utc>,
    /// Time spent waiting for budget before the grant.
    pub waited: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Acquisition {
    Granted(Slot),
    /// No credential can pay yet; retry at `until`.
    Wait {
        until: DateTime<Utc>,
        duration: Duration,
    },
}

#[derive(Debug)]
struct Ledger {
    token_id: String,
    budget: u32,
    grants: VecDeque<(i64, u32)>,
    used: u32,
}

impl Ledger {
    fn prune(&mut self, now_ms: i64) {
        while let Some(&(at, cost)) = self.grants.front() {
            if at + WINDOW_MS <= now_ms {
                self.grants.pop_front();
                self.used -= cost;
            } else {
                break;
            }
        }
    }

    fn remaining(&self) -> u32 {
        self.budget.saturating_sub(self.used)
    }

    fn view(&self, now_ms: i64) -> Credential {
        let reset_ms = self
            .grants
            .front()
            .map(|&(at, _)| at + WINDOW_MS)
            .unwrap_or(now_ms);
        Credential {
            token_id: self.token_id.clone(),
            budget_per_hour: self.budget,
            remaining: self.remaining(),
            reset_at: from_millis(reset_ms),
        }
    }

    /// Earliest instant at which `cost` fits in the window.
    fn available_at(&self, cost: u32, now_ms: i64) -> Option<i64> {
        if cost > self.budget {
            return None;
        }
        let mut free = self.remaining();
        if free >= cost {
            return Some(now_ms);
        }
        for &(at, c) in &self.grants {
            free += c;
            if free >= cost {
                return Some(at + WINDOW_MS);
            }
        }
        None
    }

    fn charge(&mut self, at_ms: i64, cost: u32) {
        self.grants.push_back((at_ms, cost));
        self.used += cost;
    }
}

/// Shared pool of credentials. All budget accounting happens under one lock,
/// so concurrent acquirers never over-commit a credential.
#[derive(Debug)]
pub struct CredentialPool {
    ledgers: Mutex<Vec<Ledger>>,
}

impl CredentialPool {
    /// Builds a pool from credential views. A credential with
    /// `remaining < budget` and a future `reset_at` is treated as having spent
    /// the difference one hour before `reset_at`.
    pub fn new(credentials: Vec<Credential>, now: DateTime<Utc>) -> Self {
        let now_ms = now.timestamp_millis();
        let ledgers = credentials
            .into_iter()
            .map(|c| {
                let mut ledger = Ledger {
                    token_id: c.token_id,
                    budget: c.budget_per_hour,
                    grants: VecDeque::new(),
                    used: 0,
                };
                let spent = c.budget_per_hour.saturating_sub(c.remaining);
                let reset_ms = c.reset_at.timestamp_millis();
                if spent > 0 && reset_ms > now_ms {
                    ledger.charge(reset_ms - WINDOW_MS, spent);
                }
                ledger
            })
            .collect();
        Self {
            ledgers: Mutex::new(ledgers),
        }
    }

    /// `count` fresh credentials named `token-1..=token-count`.
    pub fn uniform(count: usize, budget_per_hour: u32, now: DateTime<Utc>) -> Self {
        Self::new(
            (1..=count)
                .map(|i| Credential::fresh(format!("token-{i}"), budget_per_hour, now))
                .collect(),
            now,
        )
    }

    pub fn view(&self, now: DateTime<Utc>) -> Vec<Credential> {
        let now_ms = now.timestamp_millis();
        let mut ledgers = self.ledgers.lock().expect("credential pool poisoned");
        ledgers
            .iter_mut()
            .map(|l| {
                l.prune(now_ms);
                l.view(now_ms)
            })
            .collect()
    }

    /// Charges `cost` to the best credential, or reports how long to wait.
    pub fn try_acquire(&self, cost: u32, now: DateTime<Utc>) -> Result<Acquisition, AcquireError> {
        let cost = cost.max(1);
        let now_ms = now.timestamp_millis();
        let mut ledgers = self.ledgers.lock().expect("credential pool poisoned");
        if ledgers.is_empty() {
            return Err(AcquireError::EmptyPool);
        }
        if ledgers.iter().all(|l| l.budget < cost) {
            return Err(AcquireError::UnsatisfiableCost { cost });
        }
        for l in ledgers.iter_mut() {
            l.prune(now_ms);
        }
        let views: Vec<Credential> = ledgers.iter().map(|l| l.view(now_ms)).collect();
        let chosen = select_credential(&views, now).expect("pool non-empty");
        if chosen.remaining >= cost {
            let idx = views
                .iter()
                .position(|v| v.token_id == chosen.token_id)
                .expect("chosen from views");
            ledgers[idx].charge(now_ms, cost);
            return Ok(Acquisition::Granted(Slot {
                token_id: chosen.token_id.clone(),
                cost,
                granted_at: now,
                waited: None,
            }));
        }
        let until_ms = ledgers
            .iter()
            .filter_map(|l| l.available_at(cost, now_ms))
            .min()
            .expect("some credential can pay eventually");
        Ok(Acquisition::Wait {
            until: from_millis(until_ms),
            duration: Duration::from_millis((until_ms - now_ms).max(0) as u64),
        })
    }

    /// Blocks on `clock` until a slot is granted.
    pub fn acquire_request_slot(&self, cost: u32, clock: &dyn Clock) -> Result<Slot, AcquireError> {
        let mut waited = Duration::ZERO;
        loop {
            match self.try_acquire(cost, clock.now())? {
                Acquisition::Granted(mut slot) => {
                    slot.waited = (!waited.is_zero()).then_some(waited);
                    return Ok(slot);
                }
                Acquisition::Wait { duration, .. } => {
                    clock.sleep(duration);
                    waited += duration;
                }
            }
        }
    }

    /// Folds a server-reported budget into local accounting when the server
    /// says less is left than we believe.
    pub fn reconcile(&self, token_id: &str, state: RateState, now: DateTime<Utc>) {
        let now_ms = now.timestamp_millis();
        let mut ledgers = self.ledgers.lock().expect("credential pool poisoned");
        if let Some(l) = ledgers.iter_mut().find(|l| l.token_id == token_id) {
            l.prune(now_ms);
            let local = l.remaining();
            if state.remaining < local {
                let at = (state.reset_at.timestamp_millis() - WINDOW_MS).min(now_ms);
                // keep the log ordered by time
                let pos = l.grants.partition_point(|&(g, _)| g <= at);
                l.grants.insert(pos, (at, local - state.remaining));
                l.used += local - state.remaining;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.ledgers.lock().expect("credential pool poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
