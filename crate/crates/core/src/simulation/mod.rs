//! Deterministic synthetic ecosystems and the simulated-clock harness that
//! drives the real ingest loop over them.

mod crash;
mod generate;
mod oracle;
mod scenario;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{AccountType, PronounCategory};

pub use crash::{run_with_crashes, Crash, CrashingProvider, RecoveryOutcome};
pub use generate::{generate_graph, GenerateError, GeneratedFixture, GEOCODE_CASSETTE_FILE};
pub use oracle::{reachable_naive, reachable_oracle};
pub use scenario::{run_scenario, PoolSpec, Scenario, ScenarioConfig, ScenarioReport};

/// How many accounts of one type play each participation role. Everyone
/// else is Neither.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub sponsored: u64,
    pub sponsoring: u64,
    pub both: u64,
}

impl RoleCounts {
    pub fn sum(&self) -> u64 {
        self.sponsored + self.sponsoring + self.both
    }
}

/// Participation counts for the accounts located in one country.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountryMarginal {
    pub country: String,
    pub sponsored: u64,
    pub sponsoring: u64,
    pub both: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegreeModel {
    /// Discrete power law over in-degree, P(d) ~ d^-alpha, d >= 1.
    PowerLaw { alpha: f64 },
    /// In-degree uniform on [min, max].
    Uniform { min: u64, max: u64 },
}

impl Default for DegreeModel {
    fn default() -> Self {
        DegreeModel::PowerLaw { alpha: 2.5 }
    }
}

/// Recipe for a synthetic sponsorship ecosystem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub seed: u64,
    pub user_count: u64,
    pub org_count: u64,
    /// Exact role counts per account type. Types without an entry get
    /// random roles.
    #[serde(default)]
    pub role_marginals: BTreeMap<AccountType, RoleCounts>,
    /// Exact participation counts for the listed countries.
    #[serde(default)]
    pub country_marginals: Vec<CountryMarginal>,
    /// Exact pronoun category counts over User accounts; the rest are
    /// Unspecified.
    #[serde(default)]
    pub pronoun_marginals: Option<BTreeMap<PronounCategory, u64>>,
    #[serde(default)]
    pub degree_model: DegreeModel,
    /// Probability that an account is sponsorable (and thus a seed).
    #[serde(default = "one")]
    pub sponsorable_fraction: f64,
    /// Exact number of accounts with a resolvable location, including the
    /// country marginals. Defaults to the marginals plus half the rest.
    #[serde(default)]
    pub geocoded_users: Option<u64>,
    /// Exact number of distinct resolved countries. Defaults to the marginal
    /// countries plus up to 20 others.
    #[serde(default)]
    pub country_count: Option<u64>,
    /// Account creation years are drawn uniformly from this inclusive range.
    #[serde(default = "default_years")]
    pub created_years: (i32, i32),
}

fn one() -> f64 {
    1.0
}

fn default_years() -> (i32, i32) {
    (2008, 2025)
}

impl GraphSpec {
    /// A spec with random roles and no marginals.
    pub fn random(seed: u64, user_count: u64, org_count: u64) -> Self {
        Self {
            seed,
            user_count,
            org_count,
            role_marginals: BTreeMap::new(),
            country_marginals: Vec::new(),
            pronoun_marginals: None,
            degree_model: DegreeModel::default(),
            sponsorable_fraction: 1.0,
            geocoded_users: None,
            country_count: None,
            created_years: default_years(),
        }
    }
}
