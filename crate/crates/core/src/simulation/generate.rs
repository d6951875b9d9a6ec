use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DegreeModel, GraphSpec, RoleCounts};
use crate::model::{AccountType, PronounCategory, Role};
use crate::normalize::{
    countries, normalize_location_string, CandidateAddress, CassetteGeocoder, CleanedLocation,
    GeoCandidate,
};
use crate::source::{ActivityPayload, FixtureData, FixtureEdge, FixtureError, ProfilePayload};

/// File name of the geocoder recording written next to the ndjson files.
pub const GEOCODE_CASSETTE_FILE: &str = "geocode_cassette.json";

/// Latest year an account may be created in; fixtures are served from 2026.
const LAST_CREATED_YEAR: i32 = 2025;
const ACTIVITY_THROUGH_YEAR: i32 = 2026;
const MAX_IN_DEGREE: u64 = 10_000;
const TIERS_CENTS: [i64; 6] = [100, 300, 500, 1000, 2500, 5000];
const PRIVACY_LOCATIONS: [&str; 5] = ["Remote", "Earth", "Worldwide", "The Internet", "localhost"];
const UNRESOLVABLE_LOCATIONS: [&str; 4] = ["Atlantis", "Gotham City", "Somewhere over the rainbow", "Middle-earth"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerateError {
    #[error("unsatisfiable marginals: {0}")]
    Unsatisfiable(String),
    #[error("invalid spec: {0}")]
    Invalid(String),
}

/// Fixture files plus the geocoder recording that resolves their locations.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFixture {
    pub data: FixtureData,
    pub geocode: BTreeMap<String, Vec<GeoCandidate>>,
}

impl GeneratedFixture {
    pub fn write(&self, dir: &Path) -> Result<(), FixtureError> {
        self.data.write(dir)?;
        let path = dir.join(GEOCODE_CASSETTE_FILE);
        self.geocoder()
            .write(&path)
            .map_err(|source| FixtureError::Io { path, source })
    }

    pub fn geocoder(&self) -> CassetteGeocoder {
        CassetteGeocoder::new(self.geocode.clone())
    }
}

struct Node {
    login: String,
    account_type: AccountType,
    role: Role,
    sponsorable: bool,
    country: Option<String>,
}

fn unsat(msg: String) -> GenerateError {
    GenerateError::Unsatisfiable(msg)
}

/// Builds a fixture that meets every marginal in `spec` exactly.
pub fn generate_graph(spec: &GraphSpec) -> Result<GeneratedFixture, GenerateError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut nodes = assign_roles(spec, &mut rng)?;
    check_edge_feasibility(&nodes)?;
    for n in &mut nodes {
        n.sponsorable = spec.sponsorable_fraction >= 1.0 || rng.random_bool(spec.sponsorable_fraction);
    }
    let mut geocode = BTreeMap::new();
    let locations = assign_locations(spec, &mut nodes, &mut geocode, &mut rng)?;
    let pronouns = assign_pronouns(spec, &nodes, &mut rng)?;
    let edges = build_edges(spec, &nodes, &mut rng);

    let mut in_deg = vec![0i64; nodes.len()];
    let mut out_deg = vec![0i64; nodes.len()];
    for &(s, r) in &edges {
        out_deg[s] += 1;
        in_deg[r] += 1;
    }

    let mut users = Vec::with_capacity(nodes.len());
    let mut activity = Vec::new();
    for (i, n) in nodes.iter().enumerate() {
        let created_at = random_created_at(spec.created_years, &mut rng);
        let min_tier_cents = (n.sponsorable && rng.random_bool(0.9)).then(|| *TIERS_CENTS.choose(&mut rng).expect("tiers"));
        users.push(ProfilePayload {
            login: n.login.clone(),
            account_type: n.account_type,
            display_name: rng.random_bool(0.7).then(|| format!("Name {}", n.login)),
            location: locations[i].clone(),
            pronouns: pronouns[i].clone(),
            sponsorable: n.sponsorable,
            min_tier_cents,
            created_at,
            sponsor_count: in_deg[i],
            sponsoring_count: out_deg[i],
        });
        if n.account_type == AccountType::User {
            use chrono::Datelike;
            for year in created_at.year()..=ACTIVITY_THROUGH_YEAR {
                if rng.random_bool(0.7) {
                    activity.push(ActivityPayload {
                        login: n.login.clone(),
                        year,
                        commits: rng.random_range(0..600),
                        pull_requests: rng.random_range(0..80),
                        issues: rng.random_range(0..50),
                        reviews: rng.random_range(0..120),
                    });
                }
            }
        }
    }
    users.sort_by(|a, b| a.login.cmp(&b.login));
    activity.sort_by(|a, b| (&a.login, a.year).cmp(&(&b.login, b.year)));
    let mut edges: Vec<FixtureEdge> = edges
        .into_iter()
        .map(|(s, r)| FixtureEdge {
            sponsor: nodes[s].login.clone(),
            recipient: nodes[r].login.clone(),
        })
        .collect();
    edges.sort();
    Ok(GeneratedFixture {
        data: FixtureData {
            users,
            edges,
            activity,
        },
        geocode,
    })
}

fn validate(spec: &GraphSpec) -> Result<(), GenerateError> {
    match spec.degree_model {
        DegreeModel::PowerLaw { alpha } if !(alpha > 1.0) => {
            return Err(GenerateError::Invalid(format!("power-law alpha must exceed 1, got {alpha}")))
        }
        DegreeModel::Uniform { min, max } if min == 0 || min > max => {
            return Err(GenerateError::Invalid(format!("uniform degree needs 1 <= min <= max, got {min}..{max}")))
        }
        _ => {}
    }
    if !(0.0..=1.0).contains(&spec.sponsorable_fraction) {
        return Err(GenerateError::Invalid("sponsorable_fraction must be in [0, 1]".into()));
    }
    let (a, b) = spec.created_years;
    if a < crate::model::FIRST_ACTIVITY_YEAR || a > b || b > LAST_CREATED_YEAR {
        return Err(GenerateError::Invalid(format!(
            "created_years must lie within 2008..={LAST_CREATED_YEAR}, got {a}..={b}"
        )));
    }
    Ok(())
}

fn assign_roles(spec: &GraphSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Node>, GenerateError> {
    let mut nodes = Vec::new();
    for (account_type, count, prefix) in [
        (AccountType::Org, spec.org_count, "org"),
        (AccountType::User, spec.user_count, "user"),
    ] {
        let roles: Vec<Role> = match spec.role_marginals.get(&account_type) {
            Some(m) => {
                if m.sum() > count {
                    return Err(unsat(format!(
                        "{account_type} role marginals sum to {} but {} count is {count}",
                        m.sum(),
                        prefix
                    )));
                }
                let mut roles = role_list(m, count);
                roles.shuffle(rng);
                roles
            }
            None => (0..count).map(|_| random_role(rng)).collect(),
        };
        let width = count.max(1).to_string().len().max(4);
        for (i, role) in roles.into_iter().enumerate() {
            nodes.push(Node {
                login: format!("{prefix}-{i:0width$}"),
                account_type,
                role,
                sponsorable: true,
                country: None,
            });
        }
    }
    Ok(nodes)
}

fn role_list(m: &RoleCounts, count: u64) -> Vec<Role> {
    let mut roles = Vec::with_capacity(count as usize);
    roles.extend(std::iter::repeat_n(Role::Sponsored, m.sponsored as usize));
    roles.extend(std::iter::repeat_n(Role::Sponsoring, m.sponsoring as usize));
    roles.extend(std::iter::repeat_n(Role::Both, m.both as usize));
    roles.extend(std::iter::repeat_n(Role::Neither, (count - m.sum()) as usize));
    roles
}

fn random_role(rng: &mut ChaCha8Rng) -> Role {
    match rng.random::<f64>() {
        x if x < 0.15 => Role::Sponsored,
        x if x < 0.70 => Role::Sponsoring,
        x if x < 0.75 => Role::Both,
        _ => Role::Neither,
    }
}

fn check_edge_feasibility(nodes: &[Node]) -> Result<(), GenerateError> {
    let count = |r: Role| nodes.iter().filter(|n| n.role == r).count();
    let (sponsored, sponsoring, both) = (count(Role::Sponsored), count(Role::Sponsoring), count(Role::Both));
    let receivers = sponsored + both;
    let givers = sponsoring + both;
    if receivers > 0 && givers == 0 {
        return Err(unsat(format!("{receivers} sponsored accounts but nobody sponsors")));
    }
    if givers > 0 && receivers == 0 {
        return Err(unsat(format!("{givers} sponsoring accounts but nobody to sponsor")));
    }
    if both > 0 && (receivers < 2 || givers < 2) {
        return Err(unsat("a Both account needs another sponsor and another recipient".into()));
    }
    Ok(())
}

fn cleaned_key(raw: &str) -> String {
    match normalize_location_string(raw) {
        CleanedLocation::Query(q) => q,
        other => panic!("generated location {raw:?} is not geocodable: {other:?}"),
    }
}

fn country_variant(country: &str, rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..4) {
        0 => country.to_string(),
        1 => format!("{country} 🌍"),
        2 => country.to_uppercase(),
        _ => format!("  {country}  "),
    }
}

fn assign_locations(
    spec: &GraphSpec,
    nodes: &mut [Node],
    geocode: &mut BTreeMap<String, Vec<GeoCandidate>>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Option<String>>, GenerateError> {
    let mut pools: BTreeMap<Role, Vec<usize>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        pools.entry(n.role).or_default().push(i);
    }
    for pool in pools.values_mut() {
        pool.shuffle(rng);
    }

    let mut marginal_countries = BTreeSet::new();
    let mut marginal_total = 0u64;
    let mut min_marginal_total = u64::MAX;
    for m in &spec.country_marginals {
        let country = countries::canonicalize(&m.country)
            .filter(|c| *c == m.country)
            .ok_or_else(|| GenerateError::Invalid(format!("{:?} is not a canonical country name", m.country)))?;
        if !marginal_countries.insert(country) {
            return Err(GenerateError::Invalid(format!("country {country} listed twice")));
        }
        let roles = m.sponsored + m.sponsoring + m.both;
        if roles > m.total {
            return Err(unsat(format!("{country} role counts sum to {roles} but its total is {}", m.total)));
        }
        for (role, need) in [
            (Role::Sponsored, m.sponsored),
            (Role::Sponsoring, m.sponsoring),
            (Role::Both, m.both),
            (Role::Neither, m.total - roles),
        ] {
            let pool = pools.entry(role).or_default();
            if (pool.len() as u64) < need {
                return Err(unsat(format!(
                    "{country} needs {need} {role} accounts but only {} remain",
                    pool.len()
                )));
            }
            for idx in pool.split_off(pool.len() - need as usize) {
                nodes[idx].country = Some(country.to_string());
            }
        }
        marginal_total += m.total;
        min_marginal_total = min_marginal_total.min(m.total);
    }

    let mut rest: Vec<usize> = pools.into_values().flatten().collect();
    rest.sort_unstable();
    rest.shuffle(rng);
    let geocoded = spec
        .geocoded_users
        .unwrap_or(marginal_total + rest.len() as u64 / 2);
    if geocoded < marginal_total {
        return Err(unsat(format!(
            "geocoded_users {geocoded} is below the {marginal_total} accounts placed by country marginals"
        )));
    }
    let extra = geocoded - marginal_total;
    if extra > rest.len() as u64 {
        return Err(unsat(format!(
            "geocoded_users {geocoded} exceeds the population of {}",
            nodes.len()
        )));
    }
    let others = match spec.country_count {
        Some(c) if c < marginal_countries.len() as u64 => {
            return Err(unsat(format!(
                "country_count {c} is below the {} marginal countries",
                marginal_countries.len()
            )))
        }
        Some(c) => c - marginal_countries.len() as u64,
        None => extra.min(20),
    };
    if others > 0 && extra < others {
        return Err(unsat(format!("{others} further countries need at least one account each, only {extra} available")));
    }
    if others == 0 && extra > 0 {
        return Err(unsat(format!("{extra} further geocoded accounts but no further countries")));
    }
    let cap = if spec.country_marginals.is_empty() {
        u64::MAX
    } else {
        min_marginal_total.saturating_sub(1)
    };
    if others > 0 && extra > others.saturating_mul(cap) {
        return Err(unsat(format!(
            "{extra} accounts over {others} further countries would outrank a marginal country"
        )));
    }
    let mut candidates: Vec<&str> = countries::all()
        .iter()
        .copied()
        .filter(|c| !marginal_countries.contains(c))
        .collect();
    if (candidates.len() as u64) < others {
        return Err(unsat(format!("only {} further countries exist", candidates.len())));
    }
    candidates.shuffle(rng);
    let other_countries = &candidates[..others as usize];
    let mut sizes = vec![1u64; other_countries.len()];
    let mut open: Vec<usize> = (0..sizes.len()).filter(|&i| sizes[i] < cap).collect();
    for _ in others..extra {
        let pick = rng.random_range(0..open.len());
        let c = open[pick];
        sizes[c] += 1;
        if sizes[c] >= cap {
            open.swap_remove(pick);
        }
    }
    let mut cursor = 0;
    for (c, size) in other_countries.iter().zip(&sizes) {
        for &idx in &rest[cursor..cursor + *size as usize] {
            nodes[idx].country = Some(c.to_string());
        }
        cursor += *size as usize;
    }

    let mut importance: BTreeMap<String, f64> = BTreeMap::new();
    let mut out = Vec::with_capacity(nodes.len());
    for n in nodes.iter() {
        let location = match &n.country {
            Some(country) => {
                let raw = country_variant(country, rng);
                let imp = *importance
                    .entry(country.clone())
                    .or_insert_with(|| ((0.55 + 0.45 * rng.random::<f64>()) * 1000.0).round() / 1000.0);
                geocode.insert(
                    cleaned_key(&raw),
                    vec![GeoCandidate {
                        importance: imp,
                        address: CandidateAddress {
                            country: Some(country.clone()),
                        },
                    }],
                );
                Some(raw)
            }
            None => match rng.random_range(0..10) {
                0..6 => None,
                6..8 => Some(PRIVACY_LOCATIONS.choose(rng).expect("list").to_string()),
                _ => {
                    let raw = *UNRESOLVABLE_LOCATIONS.choose(rng).expect("list");
                    geocode.insert(cleaned_key(raw), Vec::new());
                    Some(raw.to_string())
                }
            },
        };
        out.push(location);
    }
    Ok(out)
}

fn pronoun_string(category: PronounCategory, rng: &mut ChaCha8Rng) -> Option<String> {
    let options: &[&str] = match category {
        PronounCategory::Masculine => &["he/him", "he/him/his", "He/Him"],
        PronounCategory::Feminine => &["she/her", "she/her/hers", "She/Her"],
        PronounCategory::OtherNeutral => &["they/them", "she/they", "he/they", "xe/xem", "any"],
        PronounCategory::Unspecified => return None,
    };
    Some(options.choose(rng).expect("options").to_string())
}

fn assign_pronouns(spec: &GraphSpec, nodes: &[Node], rng: &mut ChaCha8Rng) -> Result<Vec<Option<String>>, GenerateError> {
    let mut out = vec![None; nodes.len()];
    let mut users: Vec<usize> = (0..nodes.len())
        .filter(|&i| nodes[i].account_type == AccountType::User)
        .collect();
    match &spec.pronoun_marginals {
        Some(m) => {
            let specifying: u64 = m
                .iter()
                .filter(|(c, _)| c.is_specified())
                .map(|(_, n)| n)
                .sum();
            if specifying > users.len() as u64 {
                return Err(unsat(format!(
                    "pronoun marginals need {specifying} users but user_count is {}",
                    users.len()
                )));
            }
            if let Some(&unspecified) = m.get(&PronounCategory::Unspecified) {
                if unspecified + specifying != users.len() as u64 {
                    return Err(unsat(format!(
                        "pronoun marginals cover {} users but user_count is {}",
                        unspecified + specifying,
                        users.len()
                    )));
                }
            }
            users.shuffle(rng);
            let mut it = users.into_iter();
            for (category, n) in m.iter().filter(|(c, _)| c.is_specified()) {
                for idx in it.by_ref().take(*n as usize) {
                    out[idx] = pronoun_string(*category, rng);
                }
            }
        }
        None => {
            for idx in users {
                if rng.random_bool(0.12) {
                    let category = match rng.random::<f64>() {
                        x if x < 0.87 => PronounCategory::Masculine,
                        x if x < 0.96 => PronounCategory::Feminine,
                        _ => PronounCategory::OtherNeutral,
                    };
                    out[idx] = pronoun_string(category, rng);
                }
            }
        }
    }
    Ok(out)
}

fn sample_in_degree(model: DegreeModel, rng: &mut ChaCha8Rng) -> u64 {
    match model {
        DegreeModel::PowerLaw { alpha } => {
            let u: f64 = rng.random();
            let d = (1.0 - u).powf(-1.0 / (alpha - 1.0)).floor();
            if d.is_finite() {
                (d as u64).clamp(1, MAX_IN_DEGREE)
            } else {
                MAX_IN_DEGREE
            }
        }
        DegreeModel::Uniform { min, max } => rng.random_range(min..=max).min(MAX_IN_DEGREE),
    }
}

/// Every giver gets an out-edge and every receiver an in-edge first; extra
/// in-edges then follow the degree model.
fn build_edges(spec: &GraphSpec, nodes: &[Node], rng: &mut ChaCha8Rng) -> BTreeSet<(usize, usize)> {
    let mut givers: Vec<usize> = (0..nodes.len())
        .filter(|&i| matches!(nodes[i].role, Role::Sponsoring | Role::Both))
        .collect();
    let mut receivers: Vec<usize> = (0..nodes.len())
        .filter(|&i| matches!(nodes[i].role, Role::Sponsored | Role::Both))
        .collect();
    let mut edges = BTreeSet::new();
    if givers.is_empty() || receivers.is_empty() {
        return edges;
    }
    givers.shuffle(rng);
    receivers.shuffle(rng);
    let mut in_deg = vec![0u64; nodes.len()];
    let add = |edges: &mut BTreeSet<(usize, usize)>, in_deg: &mut [u64], s: usize, r: usize| {
        if s != r && edges.insert((s, r)) {
            in_deg[r] += 1;
        }
    };

    let n = givers.len().max(receivers.len());
    let mut self_paired = Vec::new();
    for i in 0..n {
        let (g, r) = (givers[i % givers.len()], receivers[i % receivers.len()]);
        if g == r {
            self_paired.push(g);
        } else {
            add(&mut edges, &mut in_deg, g, r);
        }
    }
    for u in self_paired {
        let r = loop {
            let r = *receivers.choose(rng).expect("receivers");
            if r != u {
                break r;
            }
        };
        add(&mut edges, &mut in_deg, u, r);
        let g = loop {
            let g = *givers.choose(rng).expect("givers");
            if g != u {
                break g;
            }
        };
        add(&mut edges, &mut in_deg, g, u);
    }

    let mut sorted_receivers = receivers.clone();
    sorted_receivers.sort_unstable();
    for r in sorted_receivers {
        let available = givers.len() as u64 - u64::from(matches!(nodes[r].role, Role::Both));
        let target = sample_in_degree(spec.degree_model, rng).min(available);
        let mut tries = 0;
        while in_deg[r] < target && tries < target * 4 {
            tries += 1;
            let g = *givers.choose(rng).expect("givers");
            add(&mut edges, &mut in_deg, g, r);
        }
    }
    edges
}

fn random_created_at(years: (i32, i32), rng: &mut ChaCha8Rng) -> DateTime<Utc> {
    let start = Utc.with_ymd_and_hms(years.0, 1, 1, 0, 0, 0).unwrap().timestamp();
    let end = Utc.with_ymd_and_hms(years.1 + 1, 1, 1, 0, 0, 0).unwrap().timestamp();
    Utc.timestamp_opt(rng.random_range(start..end), 0).unwrap()
}
