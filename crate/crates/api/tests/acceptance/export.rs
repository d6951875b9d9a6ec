use std::sync::Arc;

use chrono::Duration;
use observatory_core::clock::Clock;
use observatory_api::router;
use observatory_core::clock::SimClock;
use observatory_core::simulation::{generate_graph, GeneratedFixture, GraphSpec, Scenario, ScenarioConfig};
use observatory_core::source::{FixtureEdge, FixtureProvider};
use observatory_core::store::Store;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::support::{self, ensure, get_json, get_ok};
use crate::Outcome;

fn parse(csv_bytes: &[u8]) -> Result<Vec<csv::StringRecord>, String> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(csv_bytes)
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())
}

fn rewrite(records: &[csv::StringRecord]) -> Result<Vec<u8>, String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    for r in records {
        w.write_record(r).map_err(|e| e.to_string())?;
    }
    w.into_inner().map_err(|e| e.to_string())
}

/// Parses an export and checks that writing it back gives the same bytes.
/// Returns the data rows.
fn round_trips(bytes: &[u8]) -> Result<Vec<csv::StringRecord>, String> {
    let mut records = parse(bytes)?;
    ensure(rewrite(&records)? == bytes, || "re-export differs".into())?;
    ensure(!records.is_empty(), || "no header".into())?;
    records.remove(0);
    Ok(records)
}

fn random_query(rng: &mut ChaCha8Rng, countries: &[String]) -> Vec<(&'static str, String)> {
    let mut q = Vec::new();
    let mut maybe = |rng: &mut ChaCha8Rng, key: &'static str, values: &[&str]| {
        if rng.random_bool(0.35) {
            q.push((key, values.choose(rng).unwrap().to_string()));
        }
    };
    maybe(rng, "account_type", &["User", "Org"]);
    maybe(rng, "role", &["Sponsored", "Sponsoring", "Both"]);
    maybe(rng, "pronoun_category", &["Masculine", "Feminine", "OtherNeutral", "Unspecified"]);
    maybe(rng, "quality_flag", &["High", "Medium", "Low"]);
    maybe(rng, "min_sponsors", &["1", "2", "5"]);
    maybe(rng, "sort_by", &["sponsor_count", "sponsoring_count", "estimated_earnings", "login"]);
    maybe(rng, "sort_dir", &["asc", "desc"]);
    if rng.random_bool(0.4) {
        q.push(("country", countries.choose(rng).unwrap().clone()));
    }
    q
}

pub fn round_trip() -> Outcome {
    let rt = support::runtime();

    // Hand-written fixture with commas, quotes and a newline in display names.
    let basic = support::crawl(&support::basic_fixture(), support::pool(1), false);
    let app = router(basic.store.clone());
    let bytes = rt.block_on(get_ok(&app, "/api/export?fields=login,display_name,location_raw"))?;
    let rows = round_trips(&bytes)?;
    let name = |login: &str| rows.iter().find(|r| &r[0] == login).map(|r| r[1].to_string());
    ensure(name("dave").as_deref() == Some("Dave, \"the\" dev"), || format!("dave: {:?}", name("dave")))?;
    ensure(name("heidi").as_deref() == Some("Heidi\nsecond line, with comma"), || format!("heidi: {:?}", name("heidi")))?;

    let fixture = generate_graph(&GraphSpec {
        created_years: (2024, 2025),
        ..GraphSpec::random(50, 1_500, 120)
    })
    .map_err(|e| e.to_string())?;
    let crawl = support::crawl(&fixture, support::pool(3), false);
    let app = router(crawl.store.clone());
    let stats = rt.block_on(get_json(&app, "/api/stats?group_by=country&top_n=200"))?;
    let mut countries: Vec<String> = stats["rows"]
        .as_array()
        .ok_or("no country rows")?
        .iter()
        .filter_map(|r| r["group_key"].as_str().map(str::to_string))
        .collect();
    countries.push("Iceland".into());

    let mut rng = ChaCha8Rng::seed_from_u64(0xc5f);
    let mut nonempty = 0;
    for i in 0..50 {
        let query = serde_urlencoded::to_string(random_query(&mut rng, &countries)).map_err(|e| e.to_string())?;
        let page = rt.block_on(get_json(&app, &format!("/api/users?{query}")))?;
        let total = page["total_matching"].as_u64().ok_or("total_matching missing")?;
        let bytes = rt.block_on(get_ok(&app, &format!("/api/export?{query}")))?;
        let rows = round_trips(&bytes).map_err(|e| format!("query {i} ({query}): {e}"))?;
        ensure(rows.len() as u64 == total, || {
            format!("query {i} ({query}): {} rows, total_matching {total}", rows.len())
        })?;
        nonempty += usize::from(total > 0);
    }
    ensure(nonempty >= 10, || format!("only {nonempty} queries matched anything"))?;
    Ok(format!("special characters survive, 50 queries ({nonempty} non-empty) match total_matching"))
}

/// Re-crawls `store` from a later instant against altered source data.
fn ingest_changes(fixture: &GeneratedFixture, store: Arc<Store>, after: Duration) -> Result<(), String> {
    let mut data = fixture.data.clone();
    for u in &mut data.users {
        u.display_name = Some(format!("{} (renamed)", u.login));
    }
    let logins: Vec<String> = data.users.iter().map(|u| u.login.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..40 {
        data.edges.push(FixtureEdge {
            sponsor: logins.choose(&mut rng).unwrap().clone(),
            recipient: logins.choose(&mut rng).unwrap().clone(),
        });
    }
    let config = ScenarioConfig {
        pool: support::pool(3),
        start: ScenarioConfig::default().start + after,
        duration: Duration::days(10),
        record_events: false,
        ..ScenarioConfig::default()
    };
    let clock = Arc::new(SimClock::new(config.start));
    let provider = Arc::new(FixtureProvider::new(data, clock.clone()));
    let scenario = Scenario::assemble(provider, Arc::new(fixture.geocoder()), store, clock, config)
        .map_err(|e| e.to_string())?;
    scenario.ingest.seed().map_err(|e| e.to_string())?;
    scenario
        .ingest
        .run(
            &std::sync::atomic::AtomicBool::new(false),
            observatory_core::scheduler::RunLimits {
                stop_when_idle: true,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
    Ok(())
}

pub fn snapshot_determinism() -> Outcome {
    let rt = support::runtime();
    let fixture = generate_graph(&GraphSpec {
        created_years: (2024, 2025),
        ..GraphSpec::random(51, 800, 60)
    })
    .map_err(|e| e.to_string())?;
    let crawl = support::crawl(&fixture, support::pool(3), false);
    let store = crawl.store.clone();
    let meta = store
        .create_snapshot(crawl.clock.now(), "acceptance")
        .map_err(|e| e.to_string())?;
    let app = router(store.clone());
    let uri = format!("/api/export?snapshot_id={}", meta.snapshot_id);
    let first = rt.block_on(get_ok(&app, &uri))?;
    let live_before = rt.block_on(get_ok(&app, "/api/export"))?;

    ingest_changes(&fixture, store.clone(), Duration::hours(25))?;

    let live_after = rt.block_on(get_ok(&app, "/api/export"))?;
    ensure(live_after != live_before, || "ingest changed nothing".into())?;
    let second = rt.block_on(get_ok(&app, &uri))?;
    ensure(first == second, || "snapshot export changed".into())?;
    Ok(format!(
        "snapshot {} export of {} bytes unchanged across writes",
        meta.snapshot_id,
        first.len()
    ))
}
