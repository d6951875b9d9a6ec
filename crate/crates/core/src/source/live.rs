//! GraphQL-backed provider.
//!
//! Queries go through a [`Transport`]: [`HttpTransport`] talks to the real
//! endpoint with bearer tokens, [`CassetteTransport`] replays responses
//! recorded earlier (keyed by operation name and variables).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    ActivityPayload, Direction, EdgePage, ProfilePayload, Provider, ProviderError,
    ProviderResponse, RateState, SeedPage, PAGE_SIZE,
};
use crate::model::{AccountType, FIRST_ACTIVITY_YEAR};

pub const GITHUB_GRAPHQL_URL: &str = "https://api.github.com/graphql";

const OWNER_FIELDS: &str = r#"
  __typename
  login
  ... on User {
    name location pronouns createdAt hasSponsorsListing
    sponsors { totalCount }
    sponsoring { totalCount }
    sponsorsListing { tiers(first: 20, orderBy: {field: MONTHLY_PRICE_IN_CENTS, direction: ASC}) { nodes { monthlyPriceInCents isOneTime } } }
  }
  ... on Organization {
    name location createdAt hasSponsorsListing
    sponsors { totalCount }
    sponsoring { totalCount }
    sponsorsListing { tiers(first: 20, orderBy: {field: MONTHLY_PRICE_IN_CENTS, direction: ASC}) { nodes { monthlyPriceInCents isOneTime } } }
  }
"#;

const RATE_FIELDS: &str = "rateLimit { cost remaining resetAt }";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphqlRequest {
    pub operation: String,
    pub query: String,
    pub variables: Value,
}

impl GraphqlRequest {
    /// Stable lookup key: operation name plus canonical variables JSON.
    pub fn key(&self) -> String {
        format!("{}:{}", self.operation, self.variables)
    }
}

pub trait Transport: Send + Sync {
    /// Executes one query and returns the full response body.
    fn execute(&self, token_id: &str, request: &GraphqlRequest) -> Result<Value, ProviderError>;
}

/// HTTPS transport authenticating with bearer tokens.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    tokens: HashMap<String, String>,
}

impl HttpTransport {
    /// Token ids are `token-1..=token-n` in the order given.
    pub fn new(endpoint: impl Into<String>, secrets: &[String]) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(concat!("sponsorship-observatory/", env!("CARGO_PKG_VERSION")))
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| ProviderError::Fatal(e.to_string()))?;
        let tokens = secrets
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("token-{}", i + 1), s.clone()))
            .collect();
        Ok(Self {
            client,
            endpoint: endpoint.into(),
            tokens,
        })
    }

    pub fn token_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.tokens.keys().cloned().collect();
        ids.sort();
        ids
    }
}

impl Transport for HttpTransport {
    fn execute(&self, token_id: &str, request: &GraphqlRequest) -> Result<Value, ProviderError> {
        let secret = self
            .tokens
            .get(token_id)
            .ok_or_else(|| ProviderError::Fatal(format!("unknown credential {token_id}")))?;
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(secret)
            .json(&json!({ "query": request.query, "variables": request.variables }))
            .send()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status();
        let header = |name: &str| {
            resp.headers()
                .get(name)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<i64>().ok())
        };
        if status.as_u16() == 403 || status.as_u16() == 429 {
            let reset_at = if header("x-ratelimit-remaining") == Some(0) {
                header("x-ratelimit-reset").and_then(|s| Utc.timestamp_opt(s, 0).single())
            } else {
                header("retry-after").map(|s| Utc::now() + chrono::Duration::seconds(s))
            };
            return Err(ProviderError::RateLimited {
                reset_at: reset_at.unwrap_or_else(|| Utc::now() + chrono::Duration::seconds(60)),
            });
        }
        if status.is_server_error() {
            return Err(ProviderError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Fatal(format!("HTTP {status}")));
        }
        resp.json::<Value>()
            .map_err(|e| ProviderError::Transient(e.to_string()))
    }
}

/// Replays recorded responses. A request with no recording is a hard error.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CassetteTransport {
    pub interactions: BTreeMap<String, Value>,
}

impl CassetteTransport {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Fatal(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ProviderError::Fatal(format!("{}: {e}", path.display())))
    }
}

impl Transport for CassetteTransport {
    fn execute(&self, _token_id: &str, request: &GraphqlRequest) -> Result<Value, ProviderError> {
        self.interactions
            .get(&request.key())
            .cloned()
            .ok_or_else(|| ProviderError::Fatal(format!("no recording for {}", request.key())))
    }
}

pub struct LiveProvider<T> {
    transport: T,
    seed_query: String,
}

impl<T: Transport> LiveProvider<T> {
    pub fn new(transport: T) -> Self {
        Self {
            transport,
            seed_query: "is:sponsorable".into(),
        }
    }

    /// Search qualifier used to list seed accounts.
    pub fn with_seed_query(mut self, query: impl Into<String>) -> Self {
        self.seed_query = query.into();
        self
    }

    fn run(&self, token_id: &str, request: GraphqlRequest) -> Result<(Value, u32, Option<RateState>), ProviderError> {
        let body = self.transport.execute(token_id, &request)?;
        if let Some(errors) = body.get("errors").and_then(Value::as_array) {
            if errors.iter().any(|e| e["type"] == "NOT_FOUND") {
                return Err(ProviderError::NotFound);
            }
            if errors.iter().any(|e| e["type"] == "RATE_LIMITED") {
                let reset_at = rate_state(&body)
                    .map(|r| r.reset_at)
                    .unwrap_or_else(|| Utc::now() + chrono::Duration::seconds(60));
                return Err(ProviderError::RateLimited { reset_at });
            }
            if body.get("data").is_none_or(Value::is_null) {
                return Err(ProviderError::Fatal(Value::Array(errors.clone()).to_string()));
            }
        }
        let cost = body["data"]["rateLimit"]["cost"].as_u64().unwrap_or(1).max(1) as u32;
        let state = rate_state(&body);
        Ok((body, cost, state))
    }
}

fn rate_state(body: &Value) -> Option<RateState> {
    let rl = &body["data"]["rateLimit"];
    Some(RateState {
        remaining: rl["remaining"].as_u64()? as u32,
        reset_at: rl["resetAt"].as_str()?.parse().ok()?,
    })
}

fn bad_shape(what: &str) -> ProviderError {
    ProviderError::Fatal(format!("unexpected response shape: {what}"))
}

fn parse_owner(owner: &Value) -> Result<ProfilePayload, ProviderError> {
    let account_type = match owner["__typename"].as_str() {
        Some("User") => AccountType::User,
        Some("Organization") => AccountType::Org,
        _ => return Err(bad_shape("__typename")),
    };
    let text = |k: &str| {
        owner[k]
            .as_str()
            .filter(|s| !s.is_empty())
            .map(str::to_string)
    };
    let created_at: DateTime<Utc> = owner["createdAt"]
        .as_str()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad_shape("createdAt"))?;
    let min_tier_cents = owner["sponsorsListing"]["tiers"]["nodes"]
        .as_array()
        .into_iter()
        .flatten()
        .filter(|t| t["isOneTime"] != Value::Bool(true))
        .filter_map(|t| t["monthlyPriceInCents"].as_i64())
        .filter(|&c| c > 0)
        .min();
    Ok(ProfilePayload {
        login: text("login").ok_or_else(|| bad_shape("login"))?,
        account_type,
        display_name: text("name"),
        location: text("location"),
        pronouns: text("pronouns"),
        sponsorable: owner["hasSponsorsListing"].as_bool().unwrap_or(false),
        min_tier_cents,
        created_at,
        sponsor_count: owner["sponsors"]["totalCount"].as_i64().unwrap_or(0),
        sponsoring_count: owner["sponsoring"]["totalCount"].as_i64().unwrap_or(0),
    })
}

fn next_cursor(connection: &Value) -> Option<String> {
    let info = &connection["pageInfo"];
    if info["hasNextPage"].as_bool() == Some(true) {
        info["endCursor"].as_str().map(str::to_string)
    } else {
        None
    }
}

impl<T: Transport> Provider for LiveProvider<T> {
    fn list_sponsorable_page(
        &self,
        token_id: &str,
        cursor: Option<&str>,
    ) -> Result<ProviderResponse<SeedPage>, ProviderError> {
        let request = GraphqlRequest {
            operation: "Seeds".into(),
            query: format!(
                "query Seeds($q: String!, $cursor: String) {{ {RATE_FIELDS} search(query: $q, type: USER, first: {PAGE_SIZE}, after: $cursor) {{ nodes {{ {OWNER_FIELDS} }} pageInfo {{ hasNextPage endCursor }} }} }}"
            ),
            variables: json!({ "q": self.seed_query, "cursor": cursor }),
        };
        let (body, cost, rate_state) = self.run(token_id, request)?;
        let search = &body["data"]["search"];
        let profiles = search["nodes"]
            .as_array()
            .ok_or_else(|| bad_shape("search.nodes"))?
            .iter()
            .filter(|n| n.get("__typename").is_some())
            .map(parse_owner)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ProviderResponse {
            payload: SeedPage {
                profiles,
                next_cursor: next_cursor(search),
            },
            cost,
            rate_state,
        })
    }

    fn fetch_profile(&self, token_id: &str, login: &str) -> Result<ProviderResponse<ProfilePayload>, ProviderError> {
        let request = GraphqlRequest {
            operation: "Profile".into(),
            query: format!(
                "query Profile($login: String!) {{ {RATE_FIELDS} repositoryOwner(login: $login) {{ {OWNER_FIELDS} }} }}"
            ),
            variables: json!({ "login": login }),
        };
        let (body, cost, rate_state) = self.run(token_id, request)?;
        let owner = &body["data"]["repositoryOwner"];
        if owner.is_null() {
            return Err(ProviderError::NotFound);
        }
        Ok(ProviderResponse {
            payload: parse_owner(owner)?,
            cost,
            rate_state,
        })
    }

    fn fetch_edges_page(
        &self,
        token_id: &str,
        login: &str,
        direction: Direction,
        cursor: Option<&str>,
    ) -> Result<ProviderResponse<EdgePage>, ProviderError> {
        let (operation, field) = match direction {
            Direction::SponsorsOf => ("SponsorsOf", "sponsors"),
            Direction::SponsoredBy => ("SponsoredBy", "sponsoring"),
        };
        let request = GraphqlRequest {
            operation: operation.into(),
            query: format!(
                "query {operation}($login: String!, $cursor: String) {{ {RATE_FIELDS} repositoryOwner(login: $login) {{ ... on Sponsorable {{ {field}(first: {PAGE_SIZE}, after: $cursor) {{ nodes {{ ... on User {{ login }} ... on Organization {{ login }} }} pageInfo {{ hasNextPage endCursor }} }} }} }} }}"
            ),
            variables: json!({ "login": login, "cursor": cursor }),
        };
        let (body, cost, rate_state) = match self.run(token_id, request) {
            Err(ProviderError::Fatal(m)) if cursor.is_some() && m.contains("cursor") => {
                return Err(ProviderError::InvalidCursor)
            }
            other => other?,
        };
        let owner = &body["data"]["repositoryOwner"];
        if owner.is_null() {
            return Err(ProviderError::NotFound);
        }
        let connection = &owner[field];
        let edges = connection["nodes"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|n| n["login"].as_str())
            .map(|other| match direction {
                Direction::SponsorsOf => (other.to_string(), login.to_string()),
                Direction::SponsoredBy => (login.to_string(), other.to_string()),
            })
            .collect();
        Ok(ProviderResponse {
            payload: EdgePage {
                edges,
                next_cursor: next_cursor(connection),
                direction,
            },
            cost,
            rate_state,
        })
    }

    fn fetch_activity_year(
        &self,
        token_id: &str,
        login: &str,
        year: i32,
    ) -> Result<ProviderResponse<ActivityPayload>, ProviderError> {
        if year < FIRST_ACTIVITY_YEAR {
            return Err(ProviderError::YearOutOfRange {
                year,
                first: FIRST_ACTIVITY_YEAR,
                last: i32::MAX,
            });
        }
        let request = GraphqlRequest {
            operation: "Activity".into(),
            query: format!(
                "query Activity($login: String!, $from: DateTime!, $to: DateTime!) {{ {RATE_FIELDS} user(login: $login) {{ contributionsCollection(from: $from, to: $to) {{ totalCommitContributions totalPullRequestContributions totalIssueContributions totalPullRequestReviewContributions }} }} }}"
            ),
            variables: json!({
                "login": login,
                "from": format!("{year}-01-01T00:00:00Z"),
                "to": format!("{year}-12-31T23:59:59Z"),
            }),
        };
        let (body, cost, rate_state) = self.run(token_id, request)?;
        let user = &body["data"]["user"];
        if user.is_null() {
            return Err(ProviderError::NotFound);
        }
        let c = &user["contributionsCollection"];
        let count = |k: &str| c[k].as_u64().ok_or_else(|| bad_shape(k));
        Ok(ProviderResponse {
            payload: ActivityPayload {
                login: login.to_string(),
                year,
                commits: count("totalCommitContributions")?,
                pull_requests: count("totalPullRequestContributions")?,
                issues: count("totalIssueContributions")?,
                reviews: count("totalPullRequestReviewContributions")?,
            },
            cost,
            rate_state,
        })
    }
}
