//! Persistent data-access layer.
//!
//! Users, edges, yearly activity, the traversal queue, the geocode cache and
//! versioned snapshots live in one embedded SQLite database. Every public
//! write is a single transaction; a crash between calls leaves the store
//! consistent.

mod rows;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OpenFlags, OptionalExtension, Transaction, TransactionBehavior};
use serde::{Deserialize, Serialize};

use crate::model::{
    validate_user_record, QueueEntry, Role, SponsorshipEdge, UserRecord, YearActivity,
};
use crate::normalize::{ActivityTotals, CachedGeo};
use crate::source::Direction;
pub use rows::UserRow;
use rows::{ms, ts, user_from_row, USER_COLUMNS};

const MIGRATIONS: &[&str] = &[include_str!("../../migrations/0001_init.sql")];

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Sqlite(#[from] rusqlite::Error),
    #[error("record {login:?} rejected: {}", violations.join(", "))]
    InvalidRecord { login: String, violations: Vec<String> },
    #[error("activity ({login}, {year}) is complete and immutable")]
    ImmutableYear { login: String, year: i32 },
    #[error("invalid activity record: {0}")]
    InvalidActivity(String),
    #[error("observed edge {0:?} is not incident to the synced login in that direction")]
    InvalidObservation((String, String)),
    #[error("snapshot {0} not found")]
    SnapshotNotFound(i64),
    #[error("unsupported DATABASE_URL {0:?}")]
    BadUrl(String),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// Which version of the data a read sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataSource {
    Live,
    Snapshot(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub snapshot_id: i64,
    pub created_at: DateTime<Utc>,
    pub user_count: u64,
    pub edge_count: u64,
    pub collector_version: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SyncCounts {
    pub added: usize,
    pub retired: usize,
}

/// Everything fetched for one user, applied atomically.
#[derive(Debug, Clone)]
pub struct UserUpdate {
    pub record: UserRecord,
    pub sponsors_of: BTreeSet<(String, String)>,
    pub sponsored_by: BTreeSet<(String, String)>,
    pub activity: Vec<YearActivity>,
    pub geocode: Vec<(String, CachedGeo)>,
    pub now: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppliedUpdate {
    pub edges_added: usize,
    pub edges_retired: usize,
    /// Endpoints that were not in the store before this update.
    pub discovered: Vec<String>,
    /// The user has at least one live edge after the update.
    pub active: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StoreCounts {
    pub users: u64,
    pub fetched: u64,
    pub stubs: u64,
    pub retired: u64,
    pub live_edges: u64,
    pub ended_edges: u64,
    pub activity_rows: u64,
    pub queued: u64,
}

/// Full logical contents, for equality checks across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreDump {
    pub users: Vec<UserRecord>,
    pub edges: Vec<SponsorshipEdge>,
    pub activity: Vec<YearActivity>,
    pub queue: Vec<QueueEntry>,
}

pub struct Store {
    writer: Mutex<Connection>,
    path: Option<PathBuf>,
    readers: Mutex<Vec<Connection>>,
}

impl Store {
    /// Opens `DATABASE_URL`-style locations: `sqlite://path`, `sqlite:path`,
    /// a bare path, or `:memory:` / `sqlite::memory:`.
    pub fn open_url(url: &str) -> Result<Self> {
        let url = url.trim();
        let rest = url
            .strip_prefix("sqlite://")
            .or_else(|| url.strip_prefix("sqlite:"))
            .unwrap_or(url);
        if rest.is_empty() {
            return Err(StoreError::BadUrl(url.to_string()));
        }
        if rest == ":memory:" {
            return Self::open_in_memory();
        }
        if rest.contains("://") {
            return Err(StoreError::BadUrl(url.to_string()));
        }
        Self::open(Path::new(rest))
    }

    pub fn open(path: &Path) -> Result<Self> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        Self::init(conn, Some(path.to_path_buf()))
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?, None)
    }

    fn init(mut conn: Connection, path: Option<PathBuf>) -> Result<Self> {
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.pragma_update(None, "synchronous", "NORMAL")?;
        conn.busy_timeout(std::time::Duration::from_secs(10))?;
        migrate(&mut conn)?;
        Ok(Self {
            writer: Mutex::new(conn),
            path,
            readers: Mutex::new(Vec::new()),
        })
    }

    fn write<T>(&self, f: impl FnOnce(&Transaction) -> Result<T>) -> Result<T> {
        let mut conn = self.writer.lock().expect("store writer poisoned");
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }

    /// Runs `f` inside one read transaction. File-backed stores use separate
    /// reader connections so reads do not wait on the ingest writer.
    fn read<T>(&self, f: impl FnOnce(&Connection) -> Result<T>) -> Result<T> {
        let Some(path) = &self.path else {
            let mut conn = self.writer.lock().expect("store writer poisoned");
            let tx = conn.transaction_with_behavior(TransactionBehavior::Deferred)?;
            let out = f(&tx)?;
            tx.commit()?;
            return Ok(out);
        };
        let pooled = self.readers.lock().expect("reader pool poisoned").pop();
        let mut conn = match pooled {
            Some(c) => c,
            None => {
                let c = Connection::open_with_flags(
                    path,
                    OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
                )?;
                c.busy_timeout(std::time::Duration::from_secs(10))?;
                c
            }
        };
        let out = {
            let tx = conn.transaction_with_behavior(TransactionBehavior::Deferred)?;
            let out = f(&tx)?;
            tx.commit()?;
            out
        };
        self.readers.lock().expect("reader pool poisoned").push(conn);
        Ok(out)
    }

    // ---- users ----

    /// Inserts or updates a user, keeping the stored `first_seen_at`.
    pub fn upsert_user(&self, record: &UserRecord) -> Result<UserRecord> {
        self.write(|tx| {
            upsert_user_tx(tx, record)?;
            get_user_tx(tx, &record.login).map(|u| u.expect("just written"))
        })
    }

    pub fn get_user(&self, login: &str) -> Result<Option<UserRecord>> {
        self.read(|c| get_user_tx(c, login))
    }

    pub fn all_users(&self) -> Result<Vec<UserRecord>> {
        self.read(|c| {
            let mut stmt = c.prepare(&format!("SELECT {USER_COLUMNS} FROM users ORDER BY login"))?;
            let rows = stmt.query_map([], |r| user_from_row(r, 0))?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    /// Marks `login` as a tombstone, ends its live edges and drops its queue
    /// entry. Returns the number of edges ended.
    pub fn retire_user(&self, login: &str, now: DateTime<Utc>) -> Result<usize> {
        self.write(|tx| {
            if get_user_tx(tx, login)?.is_none() {
                upsert_user_tx(tx, &UserRecord::stub(login, now))?;
            }
            tx.execute("UPDATE users SET retired = 1 WHERE login = ?1", [login])?;
            let ended = tx.execute(
                "UPDATE edges SET ended_at = ?2 WHERE ended_at IS NULL AND (sponsor = ?1 OR recipient = ?1)",
                params![login, ms(now)],
            )?;
            tx.execute("DELETE FROM queue WHERE login = ?1", [login])?;
            Ok(ended)
        })
    }

    // ---- edges ----

    /// Diffs the live edges of (`login`, `direction`) against `observed`.
    /// Unknown endpoints get stub records.
    pub fn sync_sponsorship_edges(
        &self,
        login: &str,
        direction: Direction,
        observed: &BTreeSet<(String, String)>,
        now: DateTime<Utc>,
    ) -> Result<SyncCounts> {
        self.write(|tx| {
            let mut discovered = Vec::new();
            sync_edges_tx(tx, login, direction, observed, now, &mut discovered)
        })
    }

    pub fn edges(&self, source: DataSource) -> Result<Vec<SponsorshipEdge>> {
        self.read(|c| edges_tx(c, source))
    }

    pub fn live_edges(&self) -> Result<Vec<SponsorshipEdge>> {
        Ok(self
            .edges(DataSource::Live)?
            .into_iter()
            .filter(SponsorshipEdge::is_live)
            .collect())
    }

    // ---- activity ----

    /// Stores a yearly record unless the stored one is already complete.
    pub fn record_activity_year(&self, entry: &YearActivity) -> Result<()> {
        self.write(|tx| record_activity_tx(tx, entry))
    }

    pub fn activity_for(&self, login: &str) -> Result<Vec<YearActivity>> {
        self.read(|c| {
            let mut stmt = c.prepare_cached(
                "SELECT login, year, commits, pull_requests, issues, reviews, complete FROM activity WHERE login = ?1 ORDER BY year",
            )?;
            let rows = stmt.query_map([login], rows::activity_from_row)?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    pub fn complete_years(&self, login: &str) -> Result<BTreeSet<i32>> {
        Ok(self
            .activity_for(login)?
            .into_iter()
            .filter(|a| a.complete)
            .map(|a| a.year)
            .collect())
    }

    // ---- queue ----

    /// Inserts or replaces the single queue entry for `entry.login`. The
    /// login must already have a user record.
    pub fn enqueue(&self, entry: &QueueEntry) -> Result<()> {
        self.write(|tx| enqueue_tx(tx, entry))
    }

    /// For each (stub, entry): adds the user record if new and a queue entry
    /// if none exists, all in one transaction. Retired users are skipped.
    /// Returns how many entries were created.
    pub fn seed_users(&self, seeds: &[(UserRecord, QueueEntry)]) -> Result<usize> {
        self.write(|tx| {
            let mut created = 0;
            for (record, entry) in seeds {
                match get_user_tx(tx, &record.login)? {
                    Some(existing) if existing.retired => continue,
                    Some(_) => {}
                    None => upsert_user_tx(tx, record)?,
                }
                if insert_queue_if_absent(tx, entry)? {
                    created += 1;
                }
            }
            Ok(created)
        })
    }

    pub fn queue_entry(&self, login: &str) -> Result<Option<QueueEntry>> {
        self.read(|c| {
            Ok(c.query_row(
                "SELECT login, due_at, active, discovered_via, enqueued_at FROM queue WHERE login = ?1",
                [login],
                rows::queue_from_row,
            )
            .optional()?)
        })
    }

    pub fn queue(&self) -> Result<Vec<QueueEntry>> {
        self.read(|c| {
            let mut stmt = c.prepare(
                "SELECT login, due_at, active, discovered_via, enqueued_at FROM queue ORDER BY login",
            )?;
            let rows = stmt.query_map([], rows::queue_from_row)?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    /// Due entries in priority order: active first, most overdue first, then
    /// login ascending.
    pub fn due_users(&self, now: DateTime<Utc>, limit: usize) -> Result<Vec<QueueEntry>> {
        self.read(|c| {
            let mut stmt = c.prepare_cached(
                // One index range per class; a single ORDER BY over both
                // would walk every not-yet-due active entry.
                "SELECT * FROM (
                     SELECT login, due_at, active, discovered_via, enqueued_at FROM queue
                     WHERE active = 1 AND due_at <= ?1 ORDER BY due_at, login LIMIT ?2)
                 UNION ALL
                 SELECT * FROM (
                     SELECT login, due_at, active, discovered_via, enqueued_at FROM queue
                     WHERE active = 0 AND due_at <= ?1 ORDER BY due_at, login LIMIT ?2)
                 ORDER BY active DESC, due_at ASC, login ASC LIMIT ?2",
            )?;
            let rows = stmt.query_map(params![ms(now), limit.max(1) as i64], rows::queue_from_row)?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    pub fn earliest_due(&self) -> Result<Option<DateTime<Utc>>> {
        self.read(|c| {
            let v: Option<i64> = c.query_row("SELECT MIN(due_at) FROM queue", [], |r| r.get(0))?;
            Ok(v.map(ts))
        })
    }

    pub fn due_count(&self, now: DateTime<Utc>) -> Result<u64> {
        self.read(|c| {
            Ok(c.query_row("SELECT COUNT(*) FROM queue WHERE due_at <= ?1", [ms(now)], |r| {
                r.get::<_, i64>(0)
            })? as u64)
        })
    }

    /// Pushes an existing entry's due time, leaving everything else alone.
    pub fn defer(&self, login: &str, due_at: DateTime<Utc>) -> Result<()> {
        self.write(|tx| {
            tx.execute(
                "UPDATE queue SET due_at = ?2 WHERE login = ?1",
                params![login, ms(due_at)],
            )?;
            Ok(())
        })
    }

    // ---- per-user ingest ----

    /// Applies one user's fetched profile, edges and activity in a single
    /// transaction, enqueues newly discovered endpoints (due `now`), and
    /// re-enqueues the user at `next_due(active)`.
    pub fn apply_user_update(
        &self,
        update: &UserUpdate,
        next_due: impl Fn(bool) -> DateTime<Utc>,
    ) -> Result<AppliedUpdate> {
        let violations = validate_user_record(&update.record);
        if !violations.is_empty() {
            return Err(StoreError::InvalidRecord {
                login: update.record.login.clone(),
                violations: violations.iter().map(ToString::to_string).collect(),
            });
        }
        let login = update.record.login.as_str();
        self.write(|tx| {
            upsert_user_tx(tx, &update.record)?;
            let mut discovered = Vec::new();
            let a = sync_edges_tx(tx, login, Direction::SponsorsOf, &update.sponsors_of, update.now, &mut discovered)?;
            let b = sync_edges_tx(tx, login, Direction::SponsoredBy, &update.sponsored_by, update.now, &mut discovered)?;
            for entry in &update.activity {
                record_activity_tx(tx, entry)?;
            }
            for (query, geo) in &update.geocode {
                save_geocode_tx(tx, query, geo)?;
            }
            for other in &discovered {
                insert_queue_if_absent(
                    tx,
                    &QueueEntry {
                        login: other.clone(),
                        due_at: update.now,
                        active: false,
                        discovered_via: Some(login.to_string()),
                        enqueued_at: update.now,
                    },
                )?;
            }
            let active = has_live_edge(tx, login)?;
            enqueue_tx(
                tx,
                &QueueEntry {
                    login: login.to_string(),
                    due_at: next_due(active),
                    active,
                    discovered_via: None,
                    enqueued_at: update.now,
                },
            )?;
            Ok(AppliedUpdate {
                edges_added: a.added + b.added,
                edges_retired: a.retired + b.retired,
                discovered,
                active,
            })
        })
    }

    // ---- geocode cache ----

    pub fn load_geocode_cache(&self) -> Result<Vec<(String, CachedGeo)>> {
        self.read(|c| {
            let mut stmt = c.prepare("SELECT query, country, importance, resolved_at FROM geocode_cache")?;
            let rows = stmt.query_map([], |r| {
                let country: Option<String> = r.get(1)?;
                let resolved_at = ts(r.get(3)?);
                let geo = match country {
                    Some(country) => CachedGeo::Resolved {
                        country,
                        importance: r.get(2)?,
                        resolved_at,
                    },
                    None => CachedGeo::Unresolvable { resolved_at },
                };
                Ok((r.get(0)?, geo))
            })?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    pub fn save_geocode_entries(&self, entries: &[(String, CachedGeo)]) -> Result<()> {
        self.write(|tx| {
            for (q, g) in entries {
                save_geocode_tx(tx, q, g)?;
            }
            Ok(())
        })
    }

    // ---- snapshots ----

    /// Freezes the current users, edges and activity under a new id.
    pub fn create_snapshot(&self, now: DateTime<Utc>, collector_version: &str) -> Result<SnapshotMeta> {
        self.write(|tx| {
            let (last_id, last_at): (Option<i64>, Option<i64>) = tx.query_row(
                "SELECT MAX(snapshot_id), MAX(created_at) FROM snapshots",
                [],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )?;
            let snapshot_id = last_id.unwrap_or(0) + 1;
            // ids must increase with creation time even if the clock stalls
            let created_ms = last_at.map_or(ms(now), |prev| ms(now).max(prev + 1));
            let user_count: i64 = tx.query_row("SELECT COUNT(*) FROM users", [], |r| r.get(0))?;
            let edge_count: i64 =
                tx.query_row("SELECT COUNT(*) FROM edges WHERE ended_at IS NULL", [], |r| r.get(0))?;
            tx.execute(
                "INSERT INTO snapshots (snapshot_id, created_at, user_count, edge_count, collector_version) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![snapshot_id, created_ms, user_count, edge_count, collector_version],
            )?;
            tx.execute(
                &format!("INSERT INTO snap_users (snapshot_id, {USER_COLUMNS}) SELECT ?1, {USER_COLUMNS} FROM users"),
                [snapshot_id],
            )?;
            tx.execute(
                "INSERT INTO snap_edges (snapshot_id, id, sponsor, recipient, first_seen_at, last_seen_at, ended_at)
                 SELECT ?1, id, sponsor, recipient, first_seen_at, last_seen_at, ended_at FROM edges",
                [snapshot_id],
            )?;
            tx.execute(
                "INSERT INTO snap_activity (snapshot_id, login, year, commits, pull_requests, issues, reviews, complete)
                 SELECT ?1, login, year, commits, pull_requests, issues, reviews, complete FROM activity",
                [snapshot_id],
            )?;
            Ok(SnapshotMeta {
                snapshot_id,
                created_at: ts(created_ms),
                user_count: user_count as u64,
                edge_count: edge_count as u64,
                collector_version: collector_version.to_string(),
            })
        })
    }

    pub fn snapshots(&self) -> Result<Vec<SnapshotMeta>> {
        self.read(|c| {
            let mut stmt = c.prepare(
                "SELECT snapshot_id, created_at, user_count, edge_count, collector_version FROM snapshots ORDER BY snapshot_id",
            )?;
            let rows = stmt.query_map([], rows::snapshot_from_row)?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    pub fn snapshot(&self, snapshot_id: i64) -> Result<SnapshotMeta> {
        self.read(|c| {
            c.query_row(
                "SELECT snapshot_id, created_at, user_count, edge_count, collector_version FROM snapshots WHERE snapshot_id = ?1",
                [snapshot_id],
                rows::snapshot_from_row,
            )
            .optional()?
            .ok_or(StoreError::SnapshotNotFound(snapshot_id))
        })
    }

    pub fn delete_snapshot(&self, snapshot_id: i64) -> Result<()> {
        self.write(|tx| {
            for table in ["snap_users", "snap_edges", "snap_activity"] {
                tx.execute(&format!("DELETE FROM {table} WHERE snapshot_id = ?1"), [snapshot_id])?;
            }
            if tx.execute("DELETE FROM snapshots WHERE snapshot_id = ?1", [snapshot_id])? == 0 {
                return Err(StoreError::SnapshotNotFound(snapshot_id));
            }
            Ok(())
        })
    }

    // ---- analysis views ----

    /// Fetched, non-retired users with their role and lifetime activity,
    /// ordered by login.
    pub fn analyzable_users(&self, source: DataSource) -> Result<Vec<UserRow>> {
        self.read(|c| {
            if let DataSource::Snapshot(id) = source {
                ensure_snapshot(c, id)?;
            }
            let (users, edges, activity, filter) = source_tables(source);
            let sql = format!(
                "WITH e AS (SELECT sponsor, recipient FROM {edges} WHERE ended_at IS NULL{filter}),
                      ins AS (SELECT DISTINCT recipient AS login FROM e),
                      outs AS (SELECT DISTINCT sponsor AS login FROM e),
                      act AS (SELECT login, SUM(commits) AS c, SUM(pull_requests) AS p, SUM(issues) AS i, SUM(reviews) AS r
                              FROM {activity} WHERE 1 = 1{filter} GROUP BY login)
                 SELECT {cols}, ins.login IS NOT NULL, outs.login IS NOT NULL,
                        COALESCE(act.c, 0), COALESCE(act.p, 0), COALESCE(act.i, 0), COALESCE(act.r, 0)
                 FROM {users} u
                 LEFT JOIN ins ON ins.login = u.login
                 LEFT JOIN outs ON outs.login = u.login
                 LEFT JOIN act ON act.login = u.login
                 WHERE u.retired = 0 AND u.provenance = 'fetched'{ufilter}
                 ORDER BY u.login",
                cols = USER_COLUMNS
                    .split(", ")
                    .map(|c| format!("u.{c}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                ufilter = filter.replace("snapshot_id", "u.snapshot_id"),
            );
            let mut stmt = c.prepare(&sql)?;
            let params: Vec<i64> = match source {
                DataSource::Live => vec![],
                DataSource::Snapshot(id) => vec![id],
            };
            let n = USER_COLUMNS.split(", ").count();
            let rows = stmt.query_map(rusqlite::params_from_iter(params), |r| {
                let record = user_from_row(r, 0)?;
                let receives: bool = r.get(n)?;
                let gives: bool = r.get(n + 1)?;
                Ok(UserRow {
                    record,
                    role: Role::from_flags(receives, gives),
                    activity: ActivityTotals::new(
                        r.get::<_, i64>(n + 2)? as u64,
                        r.get::<_, i64>(n + 3)? as u64,
                        r.get::<_, i64>(n + 4)? as u64,
                        r.get::<_, i64>(n + 5)? as u64,
                    ),
                })
            })?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    pub fn counts(&self) -> Result<StoreCounts> {
        self.read(|c| {
            let n = |sql: &str| -> Result<u64> { Ok(c.query_row(sql, [], |r| r.get::<_, i64>(0))? as u64) };
            Ok(StoreCounts {
                users: n("SELECT COUNT(*) FROM users")?,
                fetched: n("SELECT COUNT(*) FROM users WHERE provenance = 'fetched' AND retired = 0")?,
                stubs: n("SELECT COUNT(*) FROM users WHERE provenance = 'stub' AND retired = 0")?,
                retired: n("SELECT COUNT(*) FROM users WHERE retired = 1")?,
                live_edges: n("SELECT COUNT(*) FROM edges WHERE ended_at IS NULL")?,
                ended_edges: n("SELECT COUNT(*) FROM edges WHERE ended_at IS NOT NULL")?,
                activity_rows: n("SELECT COUNT(*) FROM activity")?,
                queued: n("SELECT COUNT(*) FROM queue")?,
            })
        })
    }

    pub fn dump(&self) -> Result<StoreDump> {
        let activity = self.read(|c| {
            let mut stmt = c.prepare(
                "SELECT login, year, commits, pull_requests, issues, reviews, complete FROM activity ORDER BY login, year",
            )?;
            let rows = stmt.query_map([], rows::activity_from_row)?;
            Ok(rows.collect::<rusqlite::Result<Vec<_>>>()?)
        })?;
        let mut edges = self.edges(DataSource::Live)?;
        edges.sort_by(|a, b| {
            (&a.sponsor_login, &a.recipient_login, a.first_seen_at)
                .cmp(&(&b.sponsor_login, &b.recipient_login, b.first_seen_at))
        });
        Ok(StoreDump {
            users: self.all_users()?,
            edges,
            activity,
            queue: self.queue()?,
        })
    }

    /// Lists broken store invariants; empty when consistent.
    pub fn check_invariants(&self) -> Result<Vec<String>> {
        let mut problems = Vec::new();
        let users: BTreeMap<String, UserRecord> = self
            .all_users()?
            .into_iter()
            .map(|u| (u.login.clone(), u))
            .collect();
        for u in users.values() {
            for v in validate_user_record(u) {
                problems.push(format!("user {}: {v}", u.login));
            }
        }
        let edges = self.edges(DataSource::Live)?;
        for e in &edges {
            for end in [&e.sponsor_login, &e.recipient_login] {
                if !users.contains_key(end) {
                    problems.push(format!("edge endpoint {end} has no user record"));
                }
            }
        }
        for (s, r) in crate::model::duplicate_live_pairs(&edges) {
            problems.push(format!("duplicate live edge {s}->{r}"));
        }
        for q in self.queue()? {
            match users.get(&q.login) {
                None => problems.push(format!("queue entry {} has no user", q.login)),
                Some(u) if u.retired => problems.push(format!("retired user {} still queued", q.login)),
                _ => {}
            }
        }
        Ok(problems)
    }
}

fn migrate(conn: &mut Connection) -> Result<()> {
    let version: i64 = conn.pragma_query_value(None, "user_version", |r| r.get(0))?;
    for (i, sql) in MIGRATIONS.iter().enumerate().skip(version as usize) {
        let tx = conn.transaction()?;
        tx.execute_batch(sql)?;
        tx.pragma_update(None, "user_version", (i + 1) as i64)?;
        tx.commit()?;
    }
    Ok(())
}

fn source_tables(source: DataSource) -> (&'static str, &'static str, &'static str, &'static str) {
    match source {
        DataSource::Live => ("users", "edges", "activity", ""),
        DataSource::Snapshot(_) => ("snap_users", "snap_edges", "snap_activity", " AND snapshot_id = ?1"),
    }
}

fn ensure_snapshot(c: &Connection, id: i64) -> Result<()> {
    let exists: bool = c.query_row(
        "SELECT EXISTS(SELECT 1 FROM snapshots WHERE snapshot_id = ?1)",
        [id],
        |r| r.get(0),
    )?;
    if exists {
        Ok(())
    } else {
        Err(StoreError::SnapshotNotFound(id))
    }
}

fn get_user_tx(c: &Connection, login: &str) -> Result<Option<UserRecord>> {
    let mut stmt = c.prepare_cached(&format!("SELECT {USER_COLUMNS} FROM users WHERE login = ?1"))?;
    Ok(stmt.query_row([login], |r| user_from_row(r, 0)).optional()?)
}

fn upsert_user_tx(tx: &Connection, record: &UserRecord) -> Result<()> {
    let violations = validate_user_record(record);
    if !violations.is_empty() {
        return Err(StoreError::InvalidRecord {
            login: record.login.clone(),
            violations: violations.iter().map(ToString::to_string).collect(),
        });
    }
    let mut stmt = tx.prepare_cached(&format!(
        "INSERT INTO users ({USER_COLUMNS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16, ?17, ?18, ?19, ?20)
         ON CONFLICT(login) DO UPDATE SET
           account_type = excluded.account_type, display_name = excluded.display_name,
           location_raw = excluded.location_raw, country = excluded.country,
           importance = excluded.importance, resolved_from = excluded.resolved_from,
           resolved_at = excluded.resolved_at, pronouns_raw = excluded.pronouns_raw,
           pronoun_category = excluded.pronoun_category, sponsor_count = excluded.sponsor_count,
           sponsoring_count = excluded.sponsoring_count, sponsorable = excluded.sponsorable,
           min_tier_cents = excluded.min_tier_cents, created_at = excluded.created_at,
           last_fetched_at = excluded.last_fetched_at, quality_flag = excluded.quality_flag,
           provenance = excluded.provenance, retired = excluded.retired"
    ))?;
    let geo = record.geo.as_ref();
    stmt.execute(params![
        record.login,
        record.account_type.as_str(),
        record.display_name,
        record.location_raw,
        geo.map(|g| g.country.as_str()),
        geo.map(|g| g.importance),
        geo.map(|g| g.resolved_from.as_str()),
        geo.map(|g| ms(g.resolved_at)),
        record.pronouns_raw,
        record.pronoun_category.as_str(),
        record.sponsor_count,
        record.sponsoring_count,
        record.sponsorable,
        record.min_tier_cents,
        record.created_at.map(ms),
        ms(record.first_seen_at),
        record.last_fetched_at.map(ms),
        record.quality_flag.as_str(),
        record.provenance.as_str(),
        record.retired,
    ])?;
    Ok(())
}

fn sync_edges_tx(
    tx: &Connection,
    login: &str,
    direction: Direction,
    observed: &BTreeSet<(String, String)>,
    now: DateTime<Utc>,
    discovered: &mut Vec<String>,
) -> Result<SyncCounts> {
    for pair in observed {
        let incident = match direction {
            Direction::SponsorsOf => pair.1 == login,
            Direction::SponsoredBy => pair.0 == login,
        };
        if !incident || pair.0 == pair.1 {
            return Err(StoreError::InvalidObservation(pair.clone()));
        }
    }
    let column = match direction {
        Direction::SponsorsOf => "recipient",
        Direction::SponsoredBy => "sponsor",
    };
    let existing: BTreeMap<(String, String), i64> = {
        let mut stmt = tx.prepare_cached(&format!(
            "SELECT id, sponsor, recipient FROM edges WHERE ended_at IS NULL AND {column} = ?1"
        ))?;
        let rows = stmt.query_map([login], |r| Ok(((r.get(1)?, r.get(2)?), r.get(0)?)))?;
        rows.collect::<rusqlite::Result<_>>()?
    };
    let now_ms = ms(now);
    let mut counts = SyncCounts::default();
    for (pair, id) in &existing {
        if observed.contains(pair) {
            tx.prepare_cached("UPDATE edges SET last_seen_at = ?2 WHERE id = ?1")?
                .execute(params![id, now_ms])?;
        } else {
            tx.prepare_cached("UPDATE edges SET ended_at = ?2 WHERE id = ?1")?
                .execute(params![id, now_ms])?;
            counts.retired += 1;
        }
    }
    for pair in observed.iter().filter(|p| !existing.contains_key(*p)) {
        for end in [&pair.0, &pair.1] {
            let inserted = tx
                .prepare_cached(&format!(
                    "INSERT OR IGNORE INTO users ({USER_COLUMNS}) VALUES (?1, 'User', NULL, NULL, NULL, NULL, NULL, NULL, NULL, 'Unspecified', 0, 0, 0, NULL, NULL, ?2, NULL, 'Low', 'stub', 0)"
                ))?
                .execute(params![end, now_ms])?;
            if inserted > 0 {
                discovered.push(end.clone());
            }
        }
        tx.prepare_cached(
            "INSERT INTO edges (sponsor, recipient, first_seen_at, last_seen_at, ended_at) VALUES (?1, ?2, ?3, ?3, NULL)",
        )?
        .execute(params![pair.0, pair.1, now_ms])?;
        counts.added += 1;
    }
    Ok(counts)
}

fn has_live_edge(tx: &Connection, login: &str) -> Result<bool> {
    Ok(tx
        .prepare_cached(
            "SELECT EXISTS(SELECT 1 FROM edges WHERE ended_at IS NULL AND sponsor = ?1)
                 OR EXISTS(SELECT 1 FROM edges WHERE ended_at IS NULL AND recipient = ?1)",
        )?
        .query_row([login], |r| r.get(0))?)
}

fn edges_tx(c: &Connection, source: DataSource) -> Result<Vec<SponsorshipEdge>> {
    if let DataSource::Snapshot(id) = source {
        ensure_snapshot(c, id)?;
    }
    let (_, table, _, filter) = source_tables(source);
    let mut stmt = c.prepare(&format!(
        "SELECT sponsor, recipient, first_seen_at, last_seen_at, ended_at FROM {table} WHERE 1 = 1{filter} ORDER BY id"
    ))?;
    let params: Vec<i64> = match source {
        DataSource::Live => vec![],
        DataSource::Snapshot(id) => vec![id],
    };
    let rows = stmt.query_map(rusqlite::params_from_iter(params), |r| {
        Ok(SponsorshipEdge {
            sponsor_login: r.get(0)?,
            recipient_login: r.get(1)?,
            first_seen_at: ts(r.get(2)?),
            last_seen_at: ts(r.get(3)?),
            ended_at: r.get::<_, Option<i64>>(4)?.map(ts),
        })
    })?;
    Ok(rows.collect::<rusqlite::Result<_>>()?)
}

fn record_activity_tx(tx: &Connection, entry: &YearActivity) -> Result<()> {
    entry.validate().map_err(StoreError::InvalidActivity)?;
    let stored_complete: Option<bool> = tx
        .prepare_cached("SELECT complete FROM activity WHERE login = ?1 AND year = ?2")?
        .query_row(params![entry.login, entry.year], |r| r.get(0))
        .optional()?;
    if stored_complete == Some(true) {
        return Err(StoreError::ImmutableYear {
            login: entry.login.clone(),
            year: entry.year,
        });
    }
    tx.prepare_cached(
        "INSERT OR REPLACE INTO activity (login, year, commits, pull_requests, issues, reviews, complete)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
    )?
    .execute(params![
        entry.login,
        entry.year,
        entry.commits as i64,
        entry.pull_requests as i64,
        entry.issues as i64,
        entry.reviews as i64,
        entry.complete,
    ])?;
    Ok(())
}

fn enqueue_tx(tx: &Connection, entry: &QueueEntry) -> Result<()> {
    tx.prepare_cached(
        "INSERT INTO queue (login, due_at, active, discovered_via, enqueued_at) VALUES (?1, ?2, ?3, ?4, ?5)
         ON CONFLICT(login) DO UPDATE SET due_at = excluded.due_at, active = excluded.active,
           discovered_via = COALESCE(queue.discovered_via, excluded.discovered_via),
           enqueued_at = excluded.enqueued_at",
    )?
    .execute(params![
        entry.login,
        ms(entry.due_at),
        entry.active,
        entry.discovered_via,
        ms(entry.enqueued_at),
    ])?;
    Ok(())
}

fn insert_queue_if_absent(tx: &Connection, entry: &QueueEntry) -> Result<bool> {
    Ok(tx
        .prepare_cached(
            "INSERT OR IGNORE INTO queue (login, due_at, active, discovered_via, enqueued_at) VALUES (?1, ?2, ?3, ?4, ?5)",
        )?
        .execute(params![
            entry.login,
            ms(entry.due_at),
            entry.active,
            entry.discovered_via,
            ms(entry.enqueued_at),
        ])?
        > 0)
}

fn save_geocode_tx(tx: &Connection, query: &str, geo: &CachedGeo) -> Result<()> {
    let (country, importance, at) = match geo {
        CachedGeo::Resolved {
            country,
            importance,
            resolved_at,
        } => (Some(country.as_str()), Some(*importance), *resolved_at),
        CachedGeo::Unresolvable { resolved_at } => (None, None, *resolved_at),
    };
    tx.prepare_cached(
        "INSERT OR REPLACE INTO geocode_cache (query, country, importance, resolved_at) VALUES (?1, ?2, ?3, ?4)",
    )?
    .execute(params![query, country, importance, ms(at)])?;
    Ok(())
}

pub(crate) fn parse_column<T: FromStr>(value: String, idx: usize) -> rusqlite::Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value.parse().map_err(|e| {
        rusqlite::Error::FromSqlConversionFailure(idx, rusqlite::types::Type::Text, Box::new(e))
    })
}
