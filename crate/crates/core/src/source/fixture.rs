//! Deterministic provider backed by newline-delimited JSON files.
//!
//! A fixture directory holds `users.ndjson` (profile payloads),
//! `edges.ndjson` (sponsor → recipient pairs) and `activity.ndjson` (one line
//! per login and year).

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::{
    ActivityPayload, Direction, EdgePage, ProfilePayload, Provider, ProviderError,
    ProviderResponse, SeedPage, PAGE_SIZE,
};
use crate::clock::Clock;
use crate::model::FIRST_ACTIVITY_YEAR;

pub const USERS_FILE: &str = "users.ndjson";
pub const EDGES_FILE: &str = "edges.ndjson";
pub const ACTIVITY_FILE: &str = "activity.ndjson";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FixtureEdge {
    pub sponsor: String,
    pub recipient: String,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// In-memory contents of a fixture directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureData {
    pub users: Vec<ProfilePayload>,
    pub edges: Vec<FixtureEdge>,
    pub activity: Vec<ActivityPayload>,
}

impl FixtureData {
    pub fn load(dir: &Path) -> Result<Self, FixtureError> {
        Ok(Self {
            users: read_ndjson(&dir.join(USERS_FILE))?,
            edges: read_ndjson(&dir.join(EDGES_FILE))?,
            activity: read_ndjson(&dir.join(ACTIVITY_FILE))?,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), FixtureError> {
        fs::create_dir_all(dir).map_err(|source| FixtureError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_ndjson(&dir.join(USERS_FILE), &self.users)?;
        write_ndjson(&dir.join(EDGES_FILE), &self.edges)?;
        write_ndjson(&dir.join(ACTIVITY_FILE), &self.activity)?;
        Ok(())
    }
}

fn read_ndjson<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, FixtureError> {
    let file = fs::File::open(path).map_err(|source| FixtureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| FixtureError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| FixtureError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

fn write_ndjson<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), FixtureError> {
    let io_err = |source| FixtureError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for row in rows {
        let line = serde_json::to_string(row).expect("fixture rows serialize");
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[derive(Debug, Default)]
struct Index {
    users: HashMap<String, ProfilePayload>,
    sponsorable: Vec<ProfilePayload>,
    sponsors_of: HashMap<String, Vec<String>>,
    sponsored_by: HashMap<String, Vec<String>>,
    activity: HashMap<(String, i32), ActivityPayload>,
}

impl Index {
    fn build(data: &FixtureData) -> Self {
        let mut idx = Index::default();
        for u in &data.users {
            idx.users.insert(u.login.clone(), u.clone());
        }
        idx.sponsorable = data.users.iter().filter(|u| u.sponsorable).cloned().collect();
        idx.sponsorable.sort_by(|a, b| a.login.cmp(&b.login));
        for e in &data.edges {
            idx.sponsors_of
                .entry(e.recipient.clone())
                .or_default()
                .push(e.sponsor.clone());
            idx.sponsored_by
                .entry(e.sponsor.clone())
                .or_default()
                .push(e.recipient.clone());
        }
        for list in idx.sponsors_of.values_mut().chain(idx.sponsored_by.values_mut()) {
            list.sort();
            list.dedup();
        }
        for a in &data.activity {
            idx.activity.insert((a.login.clone(), a.year), a.clone());
        }
        idx
    }
}

/// Serves a [`FixtureData`] set. Years are checked against the injected
/// clock, so the "current year" follows simulated time.
pub struct FixtureProvider {
    index: RwLock<Index>,
    data: RwLock<FixtureData>,
    clock: Arc<dyn Clock>,
    page_size: usize,
}

impl FixtureProvider {
    pub fn new(data: FixtureData, clock: Arc<dyn Clock>) -> Self {
        Self {
            index: RwLock::new(Index::build(&data)),
            data: RwLock::new(data),
            clock,
            page_size: PAGE_SIZE,
        }
    }

    pub fn open(dir: &Path, clock: Arc<dyn Clock>) -> Result<Self, FixtureError> {
        Ok(Self::new(FixtureData::load(dir)?, clock))
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size.max(1);
        self
    }

    /// Mutates the served data, e.g. to model upstream churn between runs.
    pub fn update(&self, f: impl FnOnce(&mut FixtureData)) {
        let mut data = self.data.write().expect("fixture poisoned");
        f(&mut data);
        *self.index.write().expect("fixture poisoned") = Index::build(&data);
    }

    pub fn data(&self) -> FixtureData {
        self.data.read().expect("fixture poisoned").clone()
    }

    fn paginate<T: Clone>(&self, items: &[T], cursor: Option<&str>) -> Result<(Vec<T>, Option<String>), ProviderError> {
        let start = match cursor {
            None => 0,
            Some(c) => parse_cursor(c, items.len(), self.page_size)?,
        };
        let end = (start + self.page_size).min(items.len());
        let next = (end < items.len()).then(|| format!("cursor:{end}"));
        Ok((items[start..end].to_vec(), next))
    }
}

fn parse_cursor(cursor: &str, len: usize, page_size: usize) -> Result<usize, ProviderError> {
    let offset: usize = cursor
        .strip_prefix("cursor:")
        .and_then(|n| n.parse().ok())
        .ok_or(ProviderError::InvalidCursor)?;
    if offset == 0 || offset >= len || offset % page_size != 0 {
        return Err(ProviderError::InvalidCursor);
    }
    Ok(offset)
}

impl Provider for FixtureProvider {
    fn list_sponsorable_page(
        &self,
        _token_id: &str,
        cursor: Option<&str>,
    ) -> Result<ProviderResponse<SeedPage>, ProviderError> {
        let idx = self.index.read().expect("fixture poisoned");
        let (profiles, next_cursor) = self.paginate(&idx.sponsorable, cursor)?;
        Ok(ProviderResponse::unit(SeedPage {
            profiles,
            next_cursor,
        }))
    }

    fn fetch_profile(&self, _token_id: &str, login: &str) -> Result<ProviderResponse<ProfilePayload>, ProviderError> {
        let idx = self.index.read().expect("fixture poisoned");
        idx.users
            .get(login)
            .cloned()
            .map(ProviderResponse::unit)
            .ok_or(ProviderError::NotFound)
    }

    fn fetch_edges_page(
        &self,
        _token_id: &str,
        login: &str,
        direction: Direction,
        cursor: Option<&str>,
    ) -> Result<ProviderResponse<EdgePage>, ProviderError> {
        let idx = self.index.read().expect("fixture poisoned");
        if !idx.users.contains_key(login) {
            return Err(ProviderError::NotFound);
        }
        let empty = Vec::new();
        let others = match direction {
            Direction::SponsorsOf => idx.sponsors_of.get(login),
            Direction::SponsoredBy => idx.sponsored_by.get(login),
        }
        .unwrap_or(&empty);
        let (page, next_cursor) = self.paginate(others, cursor)?;
        let edges = page
            .into_iter()
            .map(|other| match direction {
                Direction::SponsorsOf => (other, login.to_string()),
                Direction::SponsoredBy => (login.to_string(), other),
            })
            .collect();
        Ok(ProviderResponse::unit(EdgePage {
            edges,
            next_cursor,
            direction,
        }))
    }

    fn fetch_activity_year(
        &self,
        _token_id: &str,
        login: &str,
        year: i32,
    ) -> Result<ProviderResponse<ActivityPayload>, ProviderError> {
        let idx = self.index.read().expect("fixture poisoned");
        let user = idx.users.get(login).ok_or(ProviderError::NotFound)?;
        let first = user.created_at.year().max(FIRST_ACTIVITY_YEAR);
        let last = self.clock.now().year();
        if year < first || year > last {
            return Err(ProviderError::YearOutOfRange { year, first, last });
        }
        let payload = idx
            .activity
            .get(&(login.to_string(), year))
            .cloned()
            .unwrap_or(ActivityPayload {
                login: login.to_string(),
                year,
                commits: 0,
                pull_requests: 0,
                issues: 0,
                reviews: 0,
            });
        Ok(ProviderResponse::unit(payload))
    }
}
