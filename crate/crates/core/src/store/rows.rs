use chrono::{DateTime, Utc};
use rusqlite::Row;
use serde::Serialize;

use super::{parse_column, SnapshotMeta};
use crate::clock::from_millis;
use crate::model::{GeoResolution, QueueEntry, Role, UserRecord, YearActivity};
use crate::normalize::ActivityTotals;

pub(super) const USER_COLUMNS: &str = "login, account_type, display_name, location_raw, country, importance, resolved_from, resolved_at, pronouns_raw, pronoun_category, sponsor_count, sponsoring_count, sponsorable, min_tier_cents, created_at, first_seen_at, last_fetched_at, quality_flag, provenance, retired";

/// An analyzable user with derived role and lifetime activity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserRow {
    pub record: UserRecord,
    pub role: Role,
    pub activity: ActivityTotals,
}

pub(super) fn ms(t: DateTime<Utc>) -> i64 {
    t.timestamp_millis()
}

pub(super) fn ts(v: i64) -> DateTime<Utc> {
    from_millis(v)
}

pub(super) fn user_from_row(r: &Row, o: usize) -> rusqlite::Result<UserRecord> {
    let country: Option<String> = r.get(o + 4)?;
    let geo = match country {
        Some(country) => Some(GeoResolution {
            country,
            importance: r.get(o + 5)?,
            resolved_from: r.get(o + 6)?,
            resolved_at: ts(r.get(o + 7)?),
        }),
        None => None,
    };
    Ok(UserRecord {
        login: r.get(o)?,
        account_type: parse_column(r.get(o + 1)?, o + 1)?,
        display_name: r.get(o + 2)?,
        location_raw: r.get(o + 3)?,
        geo,
        pronouns_raw: r.get(o + 8)?,
        pronoun_category: parse_column(r.get(o + 9)?, o + 9)?,
        sponsor_count: r.get(o + 10)?,
        sponsoring_count: r.get(o + 11)?,
        sponsorable: r.get(o + 12)?,
        min_tier_cents: r.get(o + 13)?,
        created_at: r.get::<_, Option<i64>>(o + 14)?.map(ts),
        first_seen_at: ts(r.get(o + 15)?),
        last_fetched_at: r.get::<_, Option<i64>>(o + 16)?.map(ts),
        quality_flag: parse_column(r.get(o + 17)?, o + 17)?,
        provenance: parse_column(r.get(o + 18)?, o + 18)?,
        retired: r.get(o + 19)?,
    })
}

pub(super) fn activity_from_row(r: &Row) -> rusqlite::Result<YearActivity> {
    Ok(YearActivity {
        login: r.get(0)?,
        year: r.get(1)?,
        commits: r.get::<_, i64>(2)? as u64,
        pull_requests: r.get::<_, i64>(3)? as u64,
        issues: r.get::<_, i64>(4)? as u64,
        reviews: r.get::<_, i64>(5)? as u64,
        complete: r.get(6)?,
    })
}

pub(super) fn queue_from_row(r: &Row) -> rusqlite::Result<QueueEntry> {
    Ok(QueueEntry {
        login: r.get(0)?,
        due_at: ts(r.get(1)?),
        active: r.get(2)?,
        discovered_via: r.get(3)?,
        enqueued_at: ts(r.get(4)?),
    })
}

pub(super) fn snapshot_from_row(r: &Row) -> rusqlite::Result<SnapshotMeta> {
    Ok(SnapshotMeta {
        snapshot_id: r.get(0)?,
        created_at: ts(r.get(1)?),
        user_count: r.get::<_, i64>(2)? as u64,
        edge_count: r.get::<_, i64>(3)? as u64,
        collector_version: r.get(4)?,
    })
}
