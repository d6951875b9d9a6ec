//! Environment-driven wiring shared by the `ingest` and `simulate` binaries.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use observatory_core::clock::Clock;
use observatory_core::normalize::{CassetteGeocoder, Geocoder, NominatimGeocoder};
use observatory_core::simulation::GEOCODE_CASSETTE_FILE;
use observatory_core::source::{
    CredentialPool, FixtureProvider, HttpTransport, LiveProvider, Provider, DEFAULT_BUDGET_PER_HOUR,
    GITHUB_GRAPHQL_URL,
};
use observatory_core::store::Store;

pub const DEFAULT_DATABASE_URL: &str = "sqlite://observatory.db";
pub const DEFAULT_GEOCODER_URL: &str = "https://nominatim.openstreetmap.org";

/// Credentials simulated in fixture mode.
const FIXTURE_CREDENTIALS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceMode {
    Live,
    Fixture(PathBuf),
}

impl SourceMode {
    /// `SOURCE_MODE` (live or fixture) and `FIXTURE_PATH`; an explicit
    /// fixture path wins over both.
    pub fn from_env(fixture_override: Option<PathBuf>) -> Result<Self> {
        if let Some(path) = fixture_override {
            return Ok(SourceMode::Fixture(path));
        }
        match std::env::var("SOURCE_MODE").unwrap_or_else(|_| "live".into()).trim() {
            "live" => Ok(SourceMode::Live),
            "fixture" => {
                let path = std::env::var("FIXTURE_PATH").context("SOURCE_MODE=fixture needs FIXTURE_PATH")?;
                Ok(SourceMode::Fixture(PathBuf::from(path)))
            }
            other => bail!("SOURCE_MODE must be live or fixture, got {other:?}"),
        }
    }
}

pub fn open_store() -> Result<Arc<Store>> {
    let url = std::env::var("DATABASE_URL").unwrap_or_else(|_| DEFAULT_DATABASE_URL.into());
    let store = Store::open_url(&url).with_context(|| format!("opening {url}"))?;
    Ok(Arc::new(store))
}

/// Splits `GH_TOKENS` on commas. The values are never logged.
pub fn tokens_from_env() -> Result<Vec<String>> {
    let raw = std::env::var("GH_TOKENS").context("live mode needs GH_TOKENS")?;
    let tokens: Vec<String> = raw.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect();
    if tokens.is_empty() {
        bail!("GH_TOKENS holds no tokens");
    }
    Ok(tokens)
}

/// Provider plus a credential pool whose ids match it.
pub fn provider(mode: &SourceMode, clock: Arc<dyn Clock>) -> Result<(Arc<dyn Provider>, CredentialPool)> {
    let now = clock.now();
    match mode {
        SourceMode::Live => {
            let tokens = tokens_from_env()?;
            let transport = HttpTransport::new(GITHUB_GRAPHQL_URL, &tokens)?;
            let pool = CredentialPool::uniform(tokens.len(), DEFAULT_BUDGET_PER_HOUR, now);
            Ok((Arc::new(LiveProvider::new(transport)), pool))
        }
        SourceMode::Fixture(dir) => {
            let provider = FixtureProvider::open(dir, clock).with_context(|| format!("loading {}", dir.display()))?;
            let pool = CredentialPool::uniform(FIXTURE_CREDENTIALS, DEFAULT_BUDGET_PER_HOUR, now);
            Ok((Arc::new(provider), pool))
        }
    }
}

/// `GEOCODER_URL` selects a remote geocoder (with a mandatory
/// `GEOCODER_USER_AGENT`). Otherwise fixture mode replays the fixture's
/// cassette, or the bundled one, and live mode uses the public endpoint.
pub fn geocoder(mode: &SourceMode) -> Result<Arc<dyn Geocoder>> {
    let url = std::env::var("GEOCODER_URL").ok();
    if let (SourceMode::Fixture(dir), None) = (mode, &url) {
        return Ok(Arc::new(fixture_cassette(dir)?));
    }
    let url = url.unwrap_or_else(|| DEFAULT_GEOCODER_URL.into());
    let agent = std::env::var("GEOCODER_USER_AGENT").context("a remote geocoder needs GEOCODER_USER_AGENT")?;
    Ok(Arc::new(NominatimGeocoder::new(url, &agent)?))
}

pub fn fixture_cassette(dir: &Path) -> Result<CassetteGeocoder> {
    let path = dir.join(GEOCODE_CASSETTE_FILE);
    if path.exists() {
        CassetteGeocoder::load(&path).with_context(|| format!("loading {}", path.display()))
    } else {
        Ok(CassetteGeocoder::bundled())
    }
}

pub fn init_tracing() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
}
