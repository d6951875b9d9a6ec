//! Read-only aggregations over analyzable users (fetched, not retired).
//!
//! Every function takes the rows returned by
//! [`Store::analyzable_users`](crate::store::Store::analyzable_users), so the
//! same snapshot always yields the same numbers.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::model::{AccountType, PronounCategory, QualityFlag, Role};
use crate::store::UserRow;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParticipationRow {
    pub group_key: String,
    pub sponsored: u64,
    pub sponsoring: u64,
    pub both: u64,
    /// Every user in the group, including those with role Neither.
    pub total: u64,
}

impl ParticipationRow {
    fn named(key: &str) -> Self {
        Self {
            group_key: key.to_string(),
            ..Self::default()
        }
    }

    fn add(&mut self, role: Role) {
        match role {
            Role::Sponsored => self.sponsored += 1,
            Role::Sponsoring => self.sponsoring += 1,
            Role::Both => self.both += 1,
            Role::Neither => {}
        }
        self.total += 1;
    }

    fn absorb(&mut self, other: &ParticipationRow) {
        self.sponsored += other.sponsored;
        self.sponsoring += other.sponsoring;
        self.both += other.both;
        self.total += other.total;
    }

    pub fn neither(&self) -> u64 {
        self.total - self.sponsored - self.sponsoring - self.both
    }
}

/// Group rows plus their column-wise sum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParticipationTable {
    pub rows: Vec<ParticipationRow>,
    pub totals: ParticipationRow,
}

impl ParticipationTable {
    fn from_rows(rows: Vec<ParticipationRow>) -> Self {
        let mut totals = ParticipationRow::named("Total");
        for r in &rows {
            totals.absorb(r);
        }
        Self { rows, totals }
    }
}

/// One row per account type (User, Org), then totals.
pub fn participation_by_type(users: &[UserRow]) -> ParticipationTable {
    let mut user = ParticipationRow::named(AccountType::User.as_str());
    let mut org = ParticipationRow::named(AccountType::Org.as_str());
    for u in users {
        match u.record.account_type {
            AccountType::User => user.add(u.role),
            AccountType::Org => org.add(u.role),
        }
    }
    ParticipationTable::from_rows(vec![user, org])
}

/// Users with a resolved country, grouped by country, ordered by total
/// descending with ties broken alphabetically, truncated to `top_n`. The
/// totals row sums the returned rows only.
pub fn participation_by_country(users: &[UserRow], top_n: usize) -> ParticipationTable {
    let mut groups: BTreeMap<&str, ParticipationRow> = BTreeMap::new();
    for u in users {
        if let Some(geo) = &u.record.geo {
            groups
                .entry(geo.country.as_str())
                .or_insert_with(|| ParticipationRow::named(&geo.country))
                .add(u.role);
        }
    }
    let mut rows: Vec<ParticipationRow> = groups.into_values().collect();
    rows.sort_by(|a, b| b.total.cmp(&a.total).then_with(|| a.group_key.cmp(&b.group_key)));
    rows.truncate(top_n);
    ParticipationTable::from_rows(rows)
}

/// Sponsoring-to-sponsored ratio; absent when nobody is sponsored.
pub fn sponsoring_ratio(totals: &ParticipationRow) -> Option<f64> {
    (totals.sponsored > 0).then(|| totals.sponsoring as f64 / totals.sponsored as f64)
}

/// Renders a ratio as `X.Y:1`.
pub fn format_ratio(ratio: f64) -> String {
    format!("{ratio:.1}:1")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PronounShares {
    pub masculine: f64,
    pub feminine: f64,
    pub other_neutral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PronounDistribution {
    pub counts: BTreeMap<PronounCategory, u64>,
    pub user_count: u64,
    pub specifying: u64,
    /// specifying / user_count; absent for an empty population.
    pub specifying_share: Option<f64>,
    /// Category shares over the specifying users; absent when none specify.
    pub shares: Option<PronounShares>,
}

pub fn pronoun_distribution(users: &[UserRow]) -> PronounDistribution {
    let mut counts: BTreeMap<PronounCategory, u64> =
        PronounCategory::ALL.iter().map(|c| (*c, 0)).collect();
    for u in users {
        *counts.entry(u.record.pronoun_category).or_default() += 1;
    }
    let user_count = users.len() as u64;
    let specifying = user_count - counts[&PronounCategory::Unspecified];
    let shares = (specifying > 0).then(|| {
        let share = |c| counts[&c] as f64 / specifying as f64;
        PronounShares {
            masculine: share(PronounCategory::Masculine),
            feminine: share(PronounCategory::Feminine),
            other_neutral: share(PronounCategory::OtherNeutral),
        }
    });
    PronounDistribution {
        counts,
        user_count,
        specifying,
        specifying_share: (user_count > 0).then(|| specifying as f64 / user_count as f64),
        shares,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub user_count: u64,
    pub geocoded: u64,
    /// Absent for an empty population.
    pub geocoded_fraction: Option<f64>,
    pub country_count: u64,
    pub quality_flag_histogram: BTreeMap<QualityFlag, u64>,
}

pub fn coverage_summary(users: &[UserRow]) -> CoverageSummary {
    let mut histogram: BTreeMap<QualityFlag, u64> = [QualityFlag::High, QualityFlag::Medium, QualityFlag::Low]
        .into_iter()
        .map(|q| (q, 0))
        .collect();
    let mut countries = BTreeSet::new();
    let mut geocoded = 0u64;
    for u in users {
        *histogram.entry(u.record.quality_flag).or_default() += 1;
        if let Some(geo) = &u.record.geo {
            geocoded += 1;
            countries.insert(geo.country.as_str());
        }
    }
    let user_count = users.len() as u64;
    CoverageSummary {
        user_count,
        geocoded,
        geocoded_fraction: (user_count > 0).then(|| geocoded as f64 / user_count as f64),
        country_count: countries.len() as u64,
        quality_flag_histogram: histogram,
    }
}

/// Nearest-rank quantile of an ascending slice, `p` in (0, 100].
pub fn nearest_rank(sorted: &[i64], p: f64) -> Option<i64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Percentage of `population` at or below `value`.
pub fn percentile_rank(sorted: &[i64], value: i64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let at_or_below = sorted.partition_point(|v| *v <= value);
    Some(100.0 * at_or_below as f64 / sorted.len() as f64)
}
