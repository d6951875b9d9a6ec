use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use chrono::{DateTime, Duration, Utc};
use observatory_core::events::{Event, FetchKind};
use observatory_core::scheduler::SchedulerConfig;
use observatory_core::simulation::{
    generate_graph, reachable_naive, reachable_oracle, run_scenario, run_with_crashes, DegreeModel, GraphSpec,
    ScenarioConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::support::{self, ensure};
use crate::Outcome;

const BUDGET_PER_HOUR: usize = 5_000;

fn random_spec(rng: &mut ChaCha8Rng, seed: u64, nodes: u64) -> GraphSpec {
    let orgs = nodes / 10;
    let mut spec = GraphSpec::random(seed, nodes - orgs, orgs);
    spec.sponsorable_fraction = rng.random_range(0.02..=1.0);
    spec.created_years = (2024, 2025);
    spec.degree_model = if rng.random_bool(0.5) {
        DegreeModel::PowerLaw {
            alpha: rng.random_range(1.6..3.5),
        }
    } else {
        let min = rng.random_range(1..=2);
        DegreeModel::Uniform {
            min,
            max: rng.random_range(min..=8),
        }
    };
    spec
}

pub fn discovery() -> Outcome {
    const GRAPHS: u64 = 100;
    const MAX_NODES: u64 = 10_000;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xd15c);
    let mut total_nodes = 0;
    for i in 0..GRAPHS {
        // The first graph is full size; the rest are log-uniform in size.
        let nodes = if i == 0 {
            MAX_NODES
        } else {
            rng.random_range(20f64.ln()..(MAX_NODES as f64).ln()).exp() as u64
        };
        total_nodes += nodes;
        let spec = random_spec(&mut rng, 1_000 + i, nodes);
        let fixture = generate_graph(&spec).map_err(|e| format!("graph {i}: {e}"))?;
        let expected = reachable_oracle(&fixture.data);
        if nodes <= 2_000 {
            ensure(reachable_naive(&fixture.data) == expected, || format!("graph {i}: oracles disagree"))?;
        }
        let crawl = support::crawl(&fixture, support::pool(3), false);
        let found = crawl.discovered().map_err(|e| e.to_string())?;
        if found != expected {
            let missing = expected.difference(&found).count();
            let extra = found.difference(&expected).count();
            return Err(format!("graph {i} ({nodes} nodes): {missing} missing, {extra} extra"));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 600.0, || format!("took {secs:.0}s"))?;
    Ok(format!("{GRAPHS} graphs, {total_nodes} nodes, all equal to the oracle"))
}

/// Largest number of grants inside any half-open one-hour window.
fn max_hourly(times: &mut [DateTime<Utc>]) -> u64 {
    times.sort_unstable();
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..times.len() {
        while times[hi] - times[lo] >= Duration::hours(1) {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best as u64
}

pub fn rate_budget() -> Outcome {
    const CREDENTIALS: usize = 3;
    const MIN_CALLS: u64 = 150_000;
    let mut spec = GraphSpec::random(150, 28_000, 1_200);
    spec.created_years = (2024, 2025);
    let fixture = generate_graph(&spec).map_err(|e| e.to_string())?;
    let crawl = support::crawl(&fixture, support::pool(CREDENTIALS), true);
    let start = crawl.config.start;

    let mut grants: BTreeMap<String, Vec<DateTime<Utc>>> = BTreeMap::new();
    let mut last = start;
    let mut calls = 0u64;
    for e in crawl.events.snapshot() {
        if let Event::Grant { at, token_id, cost } = e {
            ensure(cost == 1, || format!("grant of cost {cost}"))?;
            grants.entry(token_id).or_default().push(at);
            last = last.max(at);
            calls += 1;
        }
    }
    ensure(calls >= MIN_CALLS, || format!("only {calls} calls"))?;
    let client_calls = crawl.ingest.client.api_calls();
    ensure(calls == client_calls, || format!("{calls} grants vs {client_calls} calls"))?;
    let mut worst = 0;
    for (token, times) in &mut grants {
        let peak = max_hourly(times);
        ensure(peak <= BUDGET_PER_HOUR as u64, || format!("{token}: {peak} grants in one hour"))?;
        worst = worst.max(peak);
    }
    let minimum_hours = calls as f64 / (CREDENTIALS * BUDGET_PER_HOUR) as f64;
    let hours = (last - start).num_milliseconds() as f64 / 3_600_000.0;
    ensure(hours <= 1.05 * minimum_hours, || {
        format!("finished after {hours:.2}h, minimum {minimum_hours:.2}h")
    })?;
    Ok(format!(
        "{calls} calls, peak {worst}/h per credential, {hours:.2}h vs minimum {minimum_hours:.2}h"
    ))
}

pub fn refresh() -> Outcome {
    let mut spec = GraphSpec::random(48, 600, 40);
    spec.sponsorable_fraction = 0.6;
    spec.created_years = (2024, 2025);
    let fixture = generate_graph(&spec).map_err(|e| e.to_string())?;
    let config = ScenarioConfig {
        pool: support::pool(3),
        scheduler: SchedulerConfig {
            active_refresh_interval: Duration::hours(24),
            inactive_refresh_interval: Duration::hours(720),
            ..SchedulerConfig::default()
        },
        duration: Duration::hours(48),
        ..ScenarioConfig::default()
    };
    let report = run_scenario(&fixture, config).map_err(|e| e.to_string())?;

    let active: BTreeSet<&str> = fixture
        .data
        .edges
        .iter()
        .flat_map(|e| [e.sponsor.as_str(), e.recipient.as_str()])
        .collect();
    let mut fetches: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &report.events {
        if let Event::Fetch {
            kind: FetchKind::Profile,
            login,
            ..
        } = e
        {
            *fetches.entry(login.as_str()).or_default() += 1;
        }
    }
    let (mut n_active, mut n_inactive) = (0, 0);
    for login in &report.discovered {
        let n = fetches.get(login.as_str()).copied().unwrap_or(0);
        if active.contains(login.as_str()) {
            n_active += 1;
            ensure(n >= 2, || format!("active {login} fetched {n} times"))?;
        } else {
            n_inactive += 1;
            ensure(n == 1, || format!("inactive {login} fetched {n} times"))?;
        }
    }
    ensure(n_active > 0 && n_inactive > 0, || format!("{n_active} active, {n_inactive} inactive"))?;
    Ok(format!("{n_active} active fetched >= 2 times, {n_inactive} inactive fetched once"))
}

pub fn crash_recovery() -> Outcome {
    const CRASHES: usize = 20;
    let fixture = generate_graph(&GraphSpec {
        created_years: (2023, 2025),
        ..GraphSpec::random(20, 400, 30)
    })
    .map_err(|e| e.to_string())?;
    let config = ScenarioConfig {
        pool: support::pool(3),
        duration: Duration::hours(30),
        record_events: false,
        ..ScenarioConfig::default()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let baseline = run_with_crashes(&fixture, &config, &dir.path().join("baseline.sqlite"), &[]).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(0xc4a5);
    let mut points = BTreeSet::new();
    while points.len() < CRASHES {
        points.insert(rng.random_range(1..baseline.provider_calls));
    }
    let points: Vec<u64> = points.into_iter().collect();
    let crashed = run_with_crashes(&fixture, &config, &dir.path().join("crashed.sqlite"), &points).map_err(|e| e.to_string())?;
    ensure(crashed.crashes == points, || format!("crashed at {:?}", crashed.crashes))?;
    ensure(crashed.discovered == baseline.discovered, || "discovered sets differ".into())?;
    ensure(crashed.dump == baseline.dump, || "store states differ".into())?;
    Ok(format!(
        "{CRASHES} kills over {} calls, {} users, state identical",
        baseline.provider_calls,
        baseline.discovered.len()
    ))
}
