#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use observatory_core::clock::SimClock;
use observatory_core::normalize::{CassetteGeocoder, Geocoder};
use observatory_core::scheduler::RunLimits;
use observatory_core::simulation::{PoolSpec, Scenario, ScenarioConfig};
use observatory_core::source::{FixtureData, FixtureProvider};
use observatory_core::store::Store;
use tower::ServiceExt;

pub fn basic_fixture() -> FixtureData {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/basic");
    FixtureData::load(&dir).unwrap()
}

/// Crawls `data` to quiescence into `store`.
pub fn ingest(data: FixtureData, geocoder: Arc<dyn Geocoder>, store: Arc<Store>) -> Scenario {
    let config = ScenarioConfig {
        pool: PoolSpec {
            count: 3,
            budget_per_hour: 5000,
            initially_exhausted: false,
        },
        duration: chrono::Duration::days(30),
        record_events: false,
        ..ScenarioConfig::default()
    };
    let clock = Arc::new(SimClock::new(config.start));
    let provider = Arc::new(FixtureProvider::new(data, clock.clone()));
    let scenario = Scenario::assemble(provider, geocoder, store, clock, config).unwrap();
    scenario.ingest.seed().unwrap();
    scenario
        .ingest
        .run(
            &AtomicBool::new(false),
            RunLimits {
                stop_when_idle: true,
                ..RunLimits::default()
            },
        )
        .unwrap();
    scenario
}

pub fn basic_store() -> Arc<Store> {
    let store = Arc::new(Store::open_in_memory().unwrap());
    ingest(basic_fixture(), Arc::new(CassetteGeocoder::bundled()), store.clone());
    store
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    let response = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = response.status();
    let content_type = response
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let body = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}
