//! Country resolution for cleaned location strings.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::countries;
use crate::model::GeoResolution;

pub const NOMINATIM_URL: &str = "https://nominatim.openstreetmap.org";

/// One match returned by a geocoding service, in its wire shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoCandidate {
    pub importance: f64,
    #[serde(default)]
    pub address: CandidateAddress,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateAddress {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeocodeError {
    #[error("geocoder unavailable: {0}")]
    Unavailable(String),
    #[error("no recorded geocoder response for {0:?}")]
    Unrecorded(String),
}

pub trait Geocoder: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<GeoCandidate>, GeocodeError>;

    /// Remote lookups performed so far.
    fn calls(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeoOutcome {
    Resolved(GeoResolution),
    Unresolvable,
}

/// Cached result for one cleaned query. Transient failures are never cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CachedGeo {
    Resolved {
        country: String,
        importance: f64,
        resolved_at: DateTime<Utc>,
    },
    Unresolvable {
        resolved_at: DateTime<Utc>,
    },
}

impl CachedGeo {
    fn outcome(&self, query: &str) -> GeoOutcome {
        match self {
            CachedGeo::Resolved {
                country,
                importance,
                resolved_at,
            } => GeoOutcome::Resolved(GeoResolution {
                country: country.clone(),
                importance: *importance,
                resolved_from: query.to_string(),
                resolved_at: *resolved_at,
            }),
            CachedGeo::Unresolvable { .. } => GeoOutcome::Unresolvable,
        }
    }
}

/// Concurrent geocode cache keyed by cleaned query. New entries are tracked
/// until [`GeocodeCache::take_dirty`] hands them to persistent storage.
#[derive(Debug, Default)]
pub struct GeocodeCache {
    entries: RwLock<HashMap<String, CachedGeo>>,
    dirty: Mutex<BTreeMap<String, CachedGeo>>,
}

impl GeocodeCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seeds the cache from storage; loaded entries are not dirty.
    pub fn preload(&self, entries: impl IntoIterator<Item = (String, CachedGeo)>) {
        self.entries
            .write()
            .expect("geocode cache poisoned")
            .extend(entries);
    }

    pub fn get(&self, query: &str) -> Option<CachedGeo> {
        self.entries
            .read()
            .expect("geocode cache poisoned")
            .get(query)
            .cloned()
    }

    pub fn insert(&self, query: &str, value: CachedGeo) {
        self.entries
            .write()
            .expect("geocode cache poisoned")
            .insert(query.to_string(), value.clone());
        self.dirty
            .lock()
            .expect("geocode cache poisoned")
            .insert(query.to_string(), value);
    }

    pub fn take_dirty(&self) -> Vec<(String, CachedGeo)> {
        std::mem::take(&mut *self.dirty.lock().expect("geocode cache poisoned"))
            .into_iter()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("geocode cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Resolves a cleaned, geocodable query to a country.
///
/// The highest-importance candidate wins (first returned on ties). If it has
/// no country, or one outside the canonical list, the query is unresolvable.
pub fn geocode_location(
    cleaned: &str,
    cache: &GeocodeCache,
    geocoder: &dyn Geocoder,
    now: DateTime<Utc>,
) -> Result<GeoOutcome, GeocodeError> {
    if let Some(hit) = cache.get(cleaned) {
        return Ok(hit.outcome(cleaned));
    }
    let candidates = geocoder.search(cleaned)?;
    let best = candidates.iter().fold(None::<&GeoCandidate>, |best, c| match best {
        Some(b) if b.importance >= c.importance => Some(b),
        _ => Some(c),
    });
    let entry = match best.and_then(|c| {
        let country = countries::canonicalize(c.address.country.as_deref()?)?;
        Some((country, c.importance.clamp(0.0, 1.0)))
    }) {
        Some((country, importance)) => CachedGeo::Resolved {
            country: country.to_string(),
            importance,
            resolved_at: now,
        },
        None => CachedGeo::Unresolvable { resolved_at: now },
    };
    cache.insert(cleaned, entry.clone());
    Ok(entry.outcome(cleaned))
}

/// Nominatim-compatible HTTP geocoder, throttled to one request per second.
pub struct NominatimGeocoder {
    client: reqwest::blocking::Client,
    base_url: String,
    last_request: Mutex<Option<Instant>>,
    calls: AtomicUsize,
}

impl NominatimGeocoder {
    pub fn new(base_url: impl Into<String>, user_agent: &str) -> Result<Self, GeocodeError> {
        if user_agent.trim().is_empty() {
            return Err(GeocodeError::Unavailable("a user agent is required".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .user_agent(user_agent)
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| GeocodeError::Unavailable(e.to_string()))?;
        Ok(Self {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            last_request: Mutex::new(None),
            calls: AtomicUsize::new(0),
        })
    }
}

impl Geocoder for NominatimGeocoder {
    fn search(&self, query: &str) -> Result<Vec<GeoCandidate>, GeocodeError> {
        {
            let mut last = self.last_request.lock().expect("geocoder poisoned");
            if let Some(prev) = *last {
                let since = prev.elapsed();
                if since < Duration::from_secs(1) {
                    std::thread::sleep(Duration::from_secs(1) - since);
                }
            }
            *last = Some(Instant::now());
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let resp = self
            .client
            .get(format!("{}/search", self.base_url))
            .query(&[
                ("q", query),
                ("format", "jsonv2"),
                ("addressdetails", "1"),
                ("accept-language", "en"),
                ("limit", "10"),
            ])
            .send()
            .map_err(|e| GeocodeError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(GeocodeError::Unavailable(format!("HTTP {}", resp.status())));
        }
        resp.json()
            .map_err(|e| GeocodeError::Unavailable(e.to_string()))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Replays recorded geocoder responses keyed by cleaned query.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct CassetteGeocoder {
    pub recordings: BTreeMap<String, Vec<GeoCandidate>>,
    #[serde(skip)]
    calls: AtomicUsize,
}

impl CassetteGeocoder {
    pub fn new(recordings: BTreeMap<String, Vec<GeoCandidate>>) -> Self {
        Self {
            recordings,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn load(path: &Path) -> Result<Self, GeocodeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeocodeError::Unavailable(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| GeocodeError::Unavailable(format!("{}: {e}", path.display())))
    }

    /// The cassette recorded alongside the bundled location corpus.
    pub fn bundled() -> Self {
        serde_json::from_str(include_str!("../../data/geocode_cassette.json"))
            .expect("bundled cassette parses")
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("cassette serializes");
        std::fs::write(path, text + "\n")
    }
}

impl Geocoder for CassetteGeocoder {
    fn search(&self, query: &str) -> Result<Vec<GeoCandidate>, GeocodeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.recordings
            .get(query)
            .cloned()
            .ok_or_else(|| GeocodeError::Unrecorded(query.to_string()))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// One entry of the bundled location-variant corpus.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct CorpusEntry {
    pub raw: String,
    /// Expected country; absent for privacy and empty strings.
    pub country: Option<String>,
}

pub fn bundled_corpus() -> Vec<CorpusEntry> {
    serde_json::from_str(include_str!("../../data/location_corpus.json")).expect("bundled corpus parses")
}
