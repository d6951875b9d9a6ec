use chrono::Duration;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::clock::SimClock;

fn entry(login: &str, overdue_h: i64, active: bool, now: DateTime<Utc>) -> QueueEntry {
    QueueEntry {
        login: login.into(),
        due_at: now - Duration::hours(overdue_h),
        active,
        discovered_via: None,
        enqueued_at: now,
    }
}

#[test]
fn staleness_rules() {
    let cfg = SchedulerConfig::default();
    let now = SimClock::default_start();
    let mut user = UserRecord::stub("u", now - Duration::days(60));
    assert!(cfg.is_stale(&user, true, now));
    user.last_fetched_at = Some(now - Duration::hours(25));
    assert!(cfg.is_stale(&user, true, now));
    assert!(!cfg.is_stale(&user, false, now));
    user.last_fetched_at = Some(now - Duration::hours(24));
    assert!(!cfg.is_stale(&user, true, now));
}

#[test]
fn config_validation() {
    assert!(SchedulerConfig::default().validate().is_ok());
    let swapped = SchedulerConfig {
        active_refresh_interval: Duration::hours(720),
        inactive_refresh_interval: Duration::hours(24),
        ..SchedulerConfig::default()
    };
    assert_eq!(swapped.validate(), Err(ConfigError::IntervalOrder));
    let targeted = SchedulerConfig {
        seed_mode: SeedMode::TargetedFilter,
        ..SchedulerConfig::default()
    };
    assert_eq!(targeted.validate(), Err(ConfigError::EmptyFilter));
}

#[test]
fn filter_terms() {
    let f = TargetFilter::parse_terms(&["country=japan", "type=Org"]).unwrap();
    assert_eq!(f.country.as_deref(), Some("Japan"));
    assert_eq!(f.account_type, Some(AccountType::Org));
    assert!(matches!(
        TargetFilter::parse_terms(&["planet=mars"]),
        Err(ConfigError::FilterTerm(_))
    ));
    assert!(matches!(
        TargetFilter::parse_terms(&["country=Atlantis"]),
        Err(ConfigError::UnknownCountry(_))
    ));
}

#[test]
fn class_dominates_overdue() {
    let now = SimClock::default_start();
    let a = compute_priority(&entry("z", 1, true, now), now);
    let b = compute_priority(&entry("a", 100, false, now), now);
    assert!(a < b);
    let five = compute_priority(&entry("y", 5, true, now), now);
    let two = compute_priority(&entry("x", 2, true, now), now);
    assert!(five < two);
    let tie_a = compute_priority(&entry("a", 2, true, now), now);
    assert!(tie_a < two);
}

/// Reference comparator written directly from the ordering rules.
fn reference_cmp(a: &QueueEntry, b: &QueueEntry, now: DateTime<Utc>) -> std::cmp::Ordering {
    if a.active != b.active {
        return if a.active { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater };
    }
    let oa = now.timestamp_millis() - a.due_at.timestamp_millis();
    let ob = now.timestamp_millis() - b.due_at.timestamp_millis();
    if oa != ob {
        return if oa > ob { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater };
    }
    a.login.cmp(&b.login)
}

#[test]
fn thousand_random_entries_match_reference() {
    let now = SimClock::default_start();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut entries: Vec<QueueEntry> = (0..1000)
        .map(|i| entry(&format!("u{:04}", rng.random_range(0..5000) * 1000 + i), rng.random_range(0..50), rng.random_bool(0.3), now))
        .collect();
    entries.shuffle(&mut rng);
    let mut by_key = entries.clone();
    by_key.sort_by_key(|e| compute_priority(e, now));
    let mut by_ref = entries;
    by_ref.sort_by(|a, b| reference_cmp(a, b, now));
    assert_eq!(by_key, by_ref);
}

proptest! {
    #[test]
    fn store_order_matches_key(specs in proptest::collection::btree_map("[a-z]{1,6}", (0i64..100, any::<bool>()), 1..40)) {
        let now = SimClock::default_start();
        let store = Store::open_in_memory().unwrap();
        let mut entries = Vec::new();
        for (login, (overdue, active)) in &specs {
            store.upsert_user(&UserRecord::stub(login.as_str(), now)).unwrap();
            let e = entry(login, *overdue, *active, now);
            store.enqueue(&e).unwrap();
            entries.push(e);
        }
        entries.sort_by_key(|e| compute_priority(e, now));
        let from_store = store.due_users(now, entries.len()).unwrap();
        prop_assert_eq!(from_store, entries);
    }
}
