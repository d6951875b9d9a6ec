use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use observatory_api::router;
use observatory_core::model::{AccountType, PronounCategory};
use observatory_core::simulation::{generate_graph, CountryMarginal, GraphSpec, RoleCounts};
use observatory_core::store::Store;
use serde_json::Value;

use crate::support::{self, ensure};
use crate::Outcome;

/// (label, sponsored, sponsoring, both, total) as published.
type Row = (&'static str, u64, u64, u64, u64);

const TABLE1: [Row; 3] = [
    ("User", 6_077, 38_121, 1_172, 45_304),
    ("Org", 1_266, 2_428, 84, 3_728),
    ("Total", 7_343, 40_549, 1_256, 49_148),
];

const TABLE2: [Row; 7] = [
    ("USA", 1_320, 6_292, 298, 7_910),
    ("Germany", 520, 2_323, 111, 2_954),
    ("UK", 450, 1_270, 74, 1_794),
    ("Japan", 294, 879, 100, 1_273),
    ("Canada", 206, 804, 58, 1_068),
    ("France", 299, 580, 50, 929),
    ("Total", 3_089, 12_148, 691, 15_928),
];

/// Published labels that abbreviate canonical country names.
fn canonical(label: &str) -> &str {
    match label {
        "USA" => "United States",
        "UK" => "United Kingdom",
        other => other,
    }
}

/// Fixture carrying both tables' marginals. Each type's population is the
/// sum of its published role counts: the published per-type totals are
/// smaller than their own role sums, while the grand total equals them.
fn spec() -> GraphSpec {
    let role = |r: &Row| RoleCounts {
        sponsored: r.1,
        sponsoring: r.2,
        both: r.3,
    };
    let user = role(&TABLE1[0]);
    let org = role(&TABLE1[1]);
    let mut spec = GraphSpec::random(2024, user.sum(), org.sum());
    spec.role_marginals = BTreeMap::from([(AccountType::User, user), (AccountType::Org, org)]);
    spec.country_marginals = TABLE2[..6]
        .iter()
        .map(|r| CountryMarginal {
            country: canonical(r.0).to_string(),
            sponsored: r.1,
            sponsoring: r.2,
            both: r.3,
            total: r.4,
        })
        .collect();
    spec.pronoun_marginals = Some(BTreeMap::from([
        (PronounCategory::Masculine, 5_331),
        (PronounCategory::Feminine, 552),
        (PronounCategory::OtherNeutral, 245),
    ]));
    spec.geocoded_users = Some(25_704);
    spec.country_count = Some(144);
    spec.created_years = (2022, 2025);
    spec
}

fn store() -> Result<Arc<Store>, String> {
    static STORE: OnceLock<Result<Arc<Store>, String>> = OnceLock::new();
    STORE
        .get_or_init(|| {
            let fixture = generate_graph(&spec()).map_err(|e| e.to_string())?;
            let crawl = support::crawl(&fixture, support::pool(3), false);
            Ok(crawl.store.clone())
        })
        .clone()
}

fn stats(query: &str) -> Result<Value, String> {
    let app = router(store()?);
    support::runtime().block_on(support::get_json(&app, &format!("/api/stats?{query}")))
}

fn observed(row: &Value) -> (String, u64, u64, u64, u64) {
    let n = |k: &str| row[k].as_u64().unwrap_or(u64::MAX);
    (
        row["group_key"].as_str().unwrap_or("").to_string(),
        n("sponsored"),
        n("sponsoring"),
        n("both"),
        n("total"),
    )
}

fn compare(body: &Value, expected: &[Row]) -> Outcome {
    let mut rows: Vec<&Value> = body["rows"].as_array().map(|a| a.iter().collect()).unwrap_or_default();
    rows.push(&body["totals"]);
    ensure(rows.len() == expected.len(), || format!("{} rows, expected {}", rows.len(), expected.len()))?;
    let mut mismatches = Vec::new();
    for (row, want) in rows.iter().zip(expected) {
        let got = observed(row);
        let label = canonical(want.0);
        if (got.0.as_str(), got.1, got.2, got.3, got.4) != (label, want.1, want.2, want.3, want.4) {
            mismatches.push(format!(
                "{label}: got {}/{}/{}/{} want {}/{}/{}/{}",
                got.1, got.2, got.3, got.4, want.1, want.2, want.3, want.4
            ));
        }
    }
    if mismatches.is_empty() {
        Ok(format!("{} rows exact", expected.len()))
    } else {
        Err(mismatches.join("; "))
    }
}

pub fn table1() -> Outcome {
    compare(&stats("group_by=type")?, &TABLE1)
}

pub fn table2() -> Outcome {
    compare(&stats("group_by=country&top_n=6")?, &TABLE2)
}

pub fn ratio() -> Outcome {
    let body = stats("group_by=type")?;
    let totals = observed(&body["totals"]);
    ensure(totals.1 == 7_343 && totals.2 == 40_549, || {
        format!("totals {}/{}", totals.2, totals.1)
    })?;
    let ratio = body["ratio"].as_f64().ok_or("ratio missing")?;
    ensure((ratio - 40_549.0 / 7_343.0).abs() < 1e-12, || format!("ratio {ratio}"))?;
    let display = body["ratio_display"].as_str().unwrap_or("");
    ensure(display == "5.5:1", || format!("displayed {display:?}"))?;
    Ok(format!("{ratio:.3} shown as {display}"))
}
