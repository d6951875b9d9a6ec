use chrono::{DateTime, Utc};
use observatory_core::analytics::{nearest_rank, percentile_rank, CoverageSummary, ParticipationRow, PronounDistribution};
use observatory_core::model::Role;
use observatory_core::query::earnings_cents;
use observatory_core::store::{DataSource, UserRow};
use serde::Serialize;

use crate::export::{timestamp, usd_decimal, whole_usd};

/// Which data a response was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Live,
    Snapshot { snapshot_id: i64 },
}

impl From<DataSource> for Source {
    fn from(s: DataSource) -> Self {
        match s {
            DataSource::Live => Source::Live,
            DataSource::Snapshot(id) => Source::Snapshot { snapshot_id: id },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Earnings {
    pub usd: i64,
    pub lower_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActivityView {
    pub commits: u64,
    pub pull_requests: u64,
    pub issues: u64,
    pub reviews: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserView {
    pub login: String,
    pub account_type: &'static str,
    pub display_name: Option<String>,
    pub location_raw: Option<String>,
    pub country: Option<String>,
    pub geocode_importance: Option<f64>,
    pub pronoun_category: &'static str,
    pub quality_flag: &'static str,
    pub role: &'static str,
    pub sponsorable: bool,
    pub sponsor_count: i64,
    pub sponsoring_count: i64,
    pub min_tier_usd: Option<String>,
    pub estimated_monthly_earnings: Option<Earnings>,
    pub activity: ActivityView,
    pub created_at: Option<String>,
    pub first_seen_at: String,
    pub last_fetched_at: Option<String>,
}

impl From<&UserRow> for UserView {
    fn from(row: &UserRow) -> Self {
        let r = &row.record;
        UserView {
            login: r.login.clone(),
            account_type: r.account_type.as_str(),
            display_name: r.display_name.clone(),
            location_raw: r.location_raw.clone(),
            country: r.geo.as_ref().map(|g| g.country.clone()),
            geocode_importance: r.geo.as_ref().map(|g| g.importance),
            pronoun_category: r.pronoun_category.as_str(),
            quality_flag: r.quality_flag.as_str(),
            role: row.role.as_str(),
            sponsorable: r.sponsorable,
            sponsor_count: r.sponsor_count,
            sponsoring_count: r.sponsoring_count,
            min_tier_usd: r.min_tier_cents.map(usd_decimal),
            estimated_monthly_earnings: earnings_cents(row).map(|c| Earnings {
                usd: whole_usd(c),
                lower_bound: true,
            }),
            activity: ActivityView {
                commits: row.activity.commits,
                pull_requests: row.activity.pull_requests,
                issues: row.activity.issues,
                reviews: row.activity.reviews,
            },
            created_at: r.created_at.map(timestamp),
            first_seen_at: timestamp(r.first_seen_at),
            last_fetched_at: r.last_fetched_at.map(timestamp),
        }
    }
}

/// Where one value sits among the funded peers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricBand {
    pub value: Option<i64>,
    /// Share of peers at or below `value`, in percent.
    pub percentile: Option<f64>,
    pub p25: Option<i64>,
    pub p50: Option<i64>,
    pub p75: Option<i64>,
    pub p90: Option<i64>,
}

fn band(mut peers: Vec<i64>, value: Option<i64>) -> MetricBand {
    peers.sort_unstable();
    MetricBand {
        value,
        percentile: value.and_then(|v| percentile_rank(&peers, v)),
        p25: nearest_rank(&peers, 25.0),
        p50: nearest_rank(&peers, 50.0),
        p75: nearest_rank(&peers, 75.0),
        p90: nearest_rank(&peers, 90.0),
    }
}

/// A user's metrics against accounts that receive sponsorships.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkView {
    pub login: String,
    pub peer_count: u64,
    pub sponsor_count: MetricBand,
    pub commits_total: MetricBand,
    pub pull_requests_total: MetricBand,
    pub issues_total: MetricBand,
    pub reviews_total: MetricBand,
    /// Whole USD; every figure is a lower bound.
    pub estimated_monthly_earnings_usd: MetricBand,
    pub earnings_lower_bound: bool,
}

pub(crate) fn benchmark(rows: &[UserRow], login: &str) -> Option<BenchmarkView> {
    let me = rows.iter().find(|r| r.record.login == login)?;
    let peers: Vec<&UserRow> = rows
        .iter()
        .filter(|r| matches!(r.role, Role::Sponsored | Role::Both))
        .collect();
    let metric = |f: &dyn Fn(&UserRow) -> Option<i64>| band(peers.iter().filter_map(|r| f(r)).collect(), f(me));
    Some(BenchmarkView {
        login: login.to_string(),
        peer_count: peers.len() as u64,
        sponsor_count: metric(&|r| Some(r.record.sponsor_count)),
        commits_total: metric(&|r| Some(r.activity.commits as i64)),
        pull_requests_total: metric(&|r| Some(r.activity.pull_requests as i64)),
        issues_total: metric(&|r| Some(r.activity.issues as i64)),
        reviews_total: metric(&|r| Some(r.activity.reviews as i64)),
        estimated_monthly_earnings_usd: metric(&|r| earnings_cents(r).map(whole_usd)),
        earnings_lower_bound: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsResponse {
    pub group_by: String,
    pub top_n: Option<usize>,
    pub rows: Vec<ParticipationRow>,
    pub totals: ParticipationRow,
    /// Sponsoring over sponsored in the totals row.
    pub ratio: Option<f64>,
    pub ratio_display: Option<String>,
    pub pronouns: PronounDistribution,
    pub coverage: CoverageSummary,
    pub benchmark: Option<BenchmarkView>,
    pub source: Source,
    pub generated_at: DateTime<Utc>,
}
