//! Access to the remote sponsorship data source.
//!
//! A [`Provider`] answers four kinds of per-account questions (seed listing,
//! profile, edge pages, yearly activity). [`SourceClient`] wraps a provider
//! with the shared rate budget, credential rotation and retry policy.

mod client;
mod credentials;
mod fixture;
mod live;

pub use client::{BackoffPolicy, ClientError, SourceClient};
pub use credentials::{
    select_credential, AcquireError, Acquisition, Credential, CredentialPool, Slot,
    DEFAULT_BUDGET_PER_HOUR,
};
pub use fixture::{FixtureData, FixtureError, FixtureProvider, FixtureEdge};
pub use live::{
    CassetteTransport, GraphqlRequest, HttpTransport, LiveProvider, Transport, GITHUB_GRAPHQL_URL,
};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::AccountType;

/// Edges per page for every paginated connection.
pub const PAGE_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfilePayload {
    pub login: String,
    pub account_type: AccountType,
    pub display_name: Option<String>,
    pub location: Option<String>,
    pub pronouns: Option<String>,
    pub sponsorable: bool,
    pub min_tier_cents: Option<i64>,
    pub created_at: DateTime<Utc>,
    pub sponsor_count: i64,
    pub sponsoring_count: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Accounts sponsoring the queried login (login is the recipient).
    SponsorsOf,
    /// Accounts the queried login sponsors (login is the sponsor).
    SponsoredBy,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::SponsorsOf, Direction::SponsoredBy];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgePage {
    /// (sponsor, recipient) pairs.
    pub edges: Vec<(String, String)>,
    pub next_cursor: Option<String>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityPayload {
    pub login: String,
    pub year: i32,
    pub commits: u64,
    pub pull_requests: u64,
    pub issues: u64,
    pub reviews: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPage {
    pub profiles: Vec<ProfilePayload>,
    pub next_cursor: Option<String>,
}

/// Budget state echoed by the remote side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateState {
    pub remaining: u32,
    pub reset_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderResponse<T> {
    pub payload: T,
    /// Budget units consumed, at least 1.
    pub cost: u32,
    pub rate_state: Option<RateState>,
}

impl<T> ProviderResponse<T> {
    pub fn unit(payload: T) -> Self {
        Self {
            payload,
            cost: 1,
            rate_state: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("account not found")]
    NotFound,
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("rate limited until {reset_at}")]
    RateLimited { reset_at: DateTime<Utc> },
    #[error("invalid pagination cursor")]
    InvalidCursor,
    #[error("year {year} outside account range {first}..={last}")]
    YearOutOfRange { year: i32, first: i32, last: i32 },
    #[error("provider error: {0}")]
    Fatal(String),
}

/// The remote data source. Every call is made on behalf of one credential.
pub trait Provider: Send + Sync {
    fn list_sponsorable_page(
        &self,
        token_id: &str,
        cursor: Option<&str>,
    ) -> Result<ProviderResponse<SeedPage>, ProviderError>;

    fn fetch_profile(
        &self,
        token_id: &str,
        login: &str,
    ) -> Result<ProviderResponse<ProfilePayload>, ProviderError>;

    fn fetch_edges_page(
        &self,
        token_id: &str,
        login: &str,
        direction: Direction,
        cursor: Option<&str>,
    ) -> Result<ProviderResponse<EdgePage>, ProviderError>;

    fn fetch_activity_year(
        &self,
        token_id: &str,
        login: &str,
        year: i32,
    ) -> Result<ProviderResponse<ActivityPayload>, ProviderError>;
}
