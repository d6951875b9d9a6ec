use std::path::PathBuf;
use std::sync::atomic::AtomicBool;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::Duration;
use http_body_util::BodyExt;
use observatory_core::normalize::CassetteGeocoder;
use observatory_core::scheduler::{RunLimits, SchedulerConfig};
use observatory_core::simulation::{GeneratedFixture, PoolSpec, Scenario, ScenarioConfig};
use observatory_core::source::FixtureData;
use tower::ServiceExt;

pub fn pool(count: usize) -> PoolSpec {
    PoolSpec {
        count,
        budget_per_hour: 5000,
        initially_exhausted: false,
    }
}

/// Seeds and crawls until nothing is due.
pub fn crawl(fixture: &GeneratedFixture, pool: PoolSpec, record_events: bool) -> Scenario {
    let config = ScenarioConfig {
        pool,
        scheduler: SchedulerConfig::default(),
        duration: Duration::days(60),
        record_events,
        ..ScenarioConfig::default()
    };
    let scenario = Scenario::new(fixture, config).expect("scenario assembles");
    scenario.ingest.seed().expect("seed completes");
    scenario
        .ingest
        .run(
            &AtomicBool::new(false),
            RunLimits {
                until: Some(scenario.deadline()),
                stop_when_idle: true,
                ..RunLimits::default()
            },
        )
        .expect("crawl completes");
    scenario
}

pub fn basic_fixture() -> GeneratedFixture {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/basic");
    GeneratedFixture {
        data: FixtureData::load(&dir).expect("basic fixture loads"),
        geocode: CassetteGeocoder::bundled().recordings,
    }
}

pub fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .expect("runtime")
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    let response = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).expect("request"))
        .await
        .expect("infallible service");
    let status = response.status();
    let body = response.into_body().collect().await.expect("body").to_bytes().to_vec();
    (status, body)
}

pub async fn get_json(app: &Router, uri: &str) -> Result<serde_json::Value, String> {
    let (status, body) = get(app, uri).await;
    if status != StatusCode::OK {
        return Err(format!("{uri} -> {status}: {}", String::from_utf8_lossy(&body)));
    }
    serde_json::from_slice(&body).map_err(|e| format!("{uri}: {e}"))
}

pub async fn get_ok(app: &Router, uri: &str) -> Result<Vec<u8>, String> {
    let (status, body) = get(app, uri).await;
    if status != StatusCode::OK {
        return Err(format!("{uri} -> {status}: {}", String::from_utf8_lossy(&body)));
    }
    Ok(body)
}

pub fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}
