//! Read-only HTTP API over the observatory store: filtered user listings,
//! participation statistics, CSV export and snapshot metadata.

pub mod error;
pub mod export;
mod views;

use std::sync::Arc;

use axum::body::Body;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::Utc;
use observatory_core::analytics::{
    coverage_summary, format_ratio, participation_by_country, participation_by_type, pronoun_distribution,
    sponsoring_ratio,
};
use observatory_core::query::UserQuery;
use observatory_core::store::{DataSource, Store, UserRow};
use serde_json::json;

use crate::error::ApiError;
use crate::export::Projection;
pub use crate::views::{BenchmarkView, Source, StatsResponse, UserView};

type Pairs = Vec<(String, String)>;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/users", get(users))
        .route("/api/stats", get(stats))
        .route("/api/export", get(export_csv))
        .route("/api/snapshots", get(snapshots))
        .fallback(|| async { ApiError::not_found(None, "no such endpoint") })
        .with_state(AppState { store })
}

fn pairs(q: Result<Query<Pairs>, QueryRejection>) -> Result<Pairs, ApiError> {
    q.map(|Query(p)| p)
        .map_err(|e| ApiError::invalid("query", e.body_text()))
}

/// Removes `key` from `pairs`, rejecting repeats and empty values.
fn take(pairs: &mut Pairs, key: &str) -> Result<Option<String>, ApiError> {
    let mut found: Vec<String> = Vec::new();
    pairs.retain(|(k, v)| {
        if k == key {
            found.push(v.clone());
            false
        } else {
            true
        }
    });
    match found.len() {
        0 => Ok(None),
        1 if found[0].is_empty() => Err(ApiError::invalid(key, "must not be empty")),
        1 => Ok(found.pop()),
        _ => Err(ApiError::invalid(key, "given more than once")),
    }
}

fn source(pairs: &mut Pairs) -> Result<DataSource, ApiError> {
    match take(pairs, "snapshot_id")? {
        None => Ok(DataSource::Live),
        Some(v) => match v.parse::<i64>() {
            Ok(id) if id > 0 => Ok(DataSource::Snapshot(id)),
            _ => Err(ApiError::invalid("snapshot_id", format!("must be a positive integer, got {v:?}"))),
        },
    }
}

fn reject_rest(pairs: &Pairs) -> Result<(), ApiError> {
    match pairs.first() {
        Some((k, _)) => Err(ApiError::invalid(k.as_str(), "unknown parameter")),
        None => Ok(()),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn health(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let counts = blocking(move || Ok(state.store.counts()?)).await?;
    Ok(Json(json!({
        "status": "ok",
        "users": counts.users,
        "live_edges": counts.live_edges,
        "queued": counts.queued,
    })))
}

async fn users(
    State(state): State<AppState>,
    q: Result<Query<Pairs>, QueryRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let mut pairs = pairs(q)?;
    let source = source(&mut pairs)?;
    let query = UserQuery::from_pairs(&pairs)?;
    let body = blocking(move || {
        let rows = state.store.analyzable_users(source)?;
        let page = query.page(&rows);
        Ok(json!({
            "items": page.items.iter().map(|r| UserView::from(*r)).collect::<Vec<_>>(),
            "total_matching": page.total_matching,
            "page": page.page,
            "page_size": page.page_size,
            "source": Source::from(source),
        }))
    })
    .await?;
    Ok(Json(body))
}

async fn stats(
    State(state): State<AppState>,
    q: Result<Query<Pairs>, QueryRejection>,
) -> Result<Json<StatsResponse>, ApiError> {
    let mut pairs = pairs(q)?;
    let source = source(&mut pairs)?;
    let group_by = take(&mut pairs, "group_by")?
        .ok_or_else(|| ApiError::invalid("group_by", "required; one of type, country"))?;
    let top_n = match take(&mut pairs, "top_n")? {
        None => None,
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Some(n),
            _ => return Err(ApiError::invalid("top_n", format!("must be an integer >= 1, got {v:?}"))),
        },
    };
    let benchmark = take(&mut pairs, "benchmark")?;
    reject_rest(&pairs)?;
    match group_by.as_str() {
        "type" if top_n.is_some() => return Err(ApiError::invalid("top_n", "only applies to group_by=country")),
        "type" | "country" => {}
        other => {
            return Err(ApiError::invalid(
                "group_by",
                format!("{other:?} is not one of type, country"),
            ))
        }
    }
    let body = blocking(move || {
        let rows = state.store.analyzable_users(source)?;
        let table = match group_by.as_str() {
            "type" => participation_by_type(&rows),
            _ => participation_by_country(&rows, top_n.unwrap_or(usize::MAX)),
        };
        let benchmark = match &benchmark {
            None => None,
            Some(login) => Some(
                views::benchmark(&rows, login)
                    .ok_or_else(|| ApiError::not_found(Some("benchmark"), format!("no analyzable user {login:?}")))?,
            ),
        };
        let ratio = sponsoring_ratio(&table.totals);
        Ok(StatsResponse {
            group_by,
            top_n,
            ratio,
            ratio_display: ratio.map(format_ratio),
            rows: table.rows,
            totals: table.totals,
            pronouns: pronoun_distribution(&rows),
            coverage: coverage_summary(&rows),
            benchmark,
            source: Source::from(source),
            generated_at: Utc::now(),
        })
    })
    .await?;
    Ok(Json(body))
}

async fn export_csv(
    State(state): State<AppState>,
    q: Result<Query<Pairs>, QueryRejection>,
) -> Result<Response, ApiError> {
    let mut pairs = pairs(q)?;
    let source = source(&mut pairs)?;
    let projection = match take(&mut pairs, "fields")? {
        Some(f) => Projection::parse(&f)?,
        None => Projection::default(),
    };
    let query = UserQuery::from_pairs(&pairs)?;
    let rows: Vec<UserRow> = blocking(move || Ok(state.store.analyzable_users(source)?)).await?;
    let filename = match source {
        DataSource::Live => "users.csv".to_string(),
        DataSource::Snapshot(id) => format!("users-snapshot-{id}.csv"),
    };
    // The read transaction is over; encode and send in chunks.
    let chunks = ExportChunks::new(rows, query, projection);
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{filename}\"")),
        ],
        Body::from_stream(futures::stream::iter(chunks.map(Ok::<_, std::convert::Infallible>))),
    )
        .into_response())
}

const EXPORT_CHUNK_ROWS: usize = 1000;

/// Yields the header, then the selected rows in fixed-size chunks.
struct ExportChunks {
    rows: Vec<UserRow>,
    order: std::vec::IntoIter<usize>,
    projection: Projection,
    header_sent: bool,
}

impl ExportChunks {
    fn new(rows: Vec<UserRow>, query: UserQuery, projection: Projection) -> Self {
        let order = query.select_indices(&rows);
        Self {
            rows,
            order: order.into_iter(),
            projection,
            header_sent: false,
        }
    }
}

impl Iterator for ExportChunks {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        let mut w = export::writer(Vec::new());
        if !self.header_sent {
            self.header_sent = true;
            w.write_record(self.projection.header()).expect("write to Vec");
        }
        let mut wrote = false;
        for i in self.order.by_ref().take(EXPORT_CHUNK_ROWS) {
            w.write_record(self.projection.record(&self.rows[i])).expect("write to Vec");
            wrote = true;
        }
        let bytes = w.into_inner().expect("flush to Vec");
        (wrote || !bytes.is_empty()).then_some(bytes)
    }
}

async fn snapshots(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let list = blocking(move || Ok(state.store.snapshots()?)).await?;
    Ok(Json(json!({ "snapshots": list })))
}
