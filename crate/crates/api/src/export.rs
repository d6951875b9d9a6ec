//! CSV rendering of analyzable users.

use chrono::{DateTime, SecondsFormat, Utc};
use observatory_core::query::earnings_cents;
use observatory_core::store::UserRow;

use crate::error::ApiError;

/// Every exportable column, in default order.
pub const COLUMNS: [&str; 20] = [
    "login",
    "account_type",
    "display_name",
    "location_raw",
    "country",
    "geocode_importance",
    "pronoun_category",
    "sponsorable",
    "sponsor_count",
    "sponsoring_count",
    "min_tier_usd",
    "estimated_monthly_earnings_usd",
    "commits_total",
    "pull_requests_total",
    "issues_total",
    "reviews_total",
    "created_at",
    "first_seen_at",
    "last_fetched_at",
    "quality_flag",
];

/// Indices into [`COLUMNS`], in output order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection(Vec<usize>);

impl Default for Projection {
    fn default() -> Self {
        Projection((0..COLUMNS.len()).collect())
    }
}

impl Projection {
    /// Parses a comma-separated column list. Unknown or repeated names are
    /// rejected.
    pub fn parse(fields: &str) -> Result<Self, ApiError> {
        let mut out = Vec::new();
        for name in fields.split(',') {
            let name = name.trim();
            let idx = COLUMNS.iter().position(|c| *c == name).ok_or_else(|| {
                ApiError::invalid(
                    "fields",
                    format!("unknown column {name:?}; valid columns: {}", COLUMNS.join(", ")),
                )
            })?;
            if out.contains(&idx) {
                return Err(ApiError::invalid("fields", format!("column {name:?} listed twice")));
            }
            out.push(idx);
        }
        Ok(Projection(out))
    }

    pub fn header(&self) -> Vec<&'static str> {
        self.0.iter().map(|&i| COLUMNS[i]).collect()
    }

    pub fn record(&self, row: &UserRow) -> Vec<String> {
        self.0.iter().map(|&i| cell(row, i)).collect()
    }
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Cents as an exact decimal dollar amount.
pub fn usd_decimal(cents: i64) -> String {
    format!("{}.{:02}", cents / 100, cents % 100)
}

/// Whole dollars, rounded down so a lower bound stays a lower bound.
pub fn whole_usd(cents: i64) -> i64 {
    cents.div_euclid(100)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn cell(row: &UserRow, column: usize) -> String {
    let r = &row.record;
    match COLUMNS[column] {
        "login" => r.login.clone(),
        "account_type" => r.account_type.as_str().to_string(),
        "display_name" => opt(r.display_name.as_ref()),
        "location_raw" => opt(r.location_raw.as_ref()),
        "country" => opt(r.geo.as_ref().map(|g| &g.country)),
        "geocode_importance" => opt(r.geo.as_ref().map(|g| g.importance)),
        "pronoun_category" => r.pronoun_category.as_str().to_string(),
        "sponsorable" => r.sponsorable.to_string(),
        "sponsor_count" => r.sponsor_count.to_string(),
        "sponsoring_count" => r.sponsoring_count.to_string(),
        "min_tier_usd" => opt(r.min_tier_cents.map(usd_decimal)),
        "estimated_monthly_earnings_usd" => opt(earnings_cents(row).map(whole_usd)),
        "commits_total" => row.activity.commits.to_string(),
        "pull_requests_total" => row.activity.pull_requests.to_string(),
        "issues_total" => row.activity.issues.to_string(),
        "reviews_total" => row.activity.reviews.to_string(),
        "created_at" => opt(r.created_at.map(timestamp)),
        "first_seen_at" => timestamp(r.first_seen_at),
        "last_fetched_at" => opt(r.last_fetched_at.map(timestamp)),
        "quality_flag" => r.quality_flag.as_str().to_string(),
        other => unreachable!("column {other} has no renderer"),
    }
}

pub fn writer<W: std::io::Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(out)
}

/// Renders a header plus `rows` into one buffer.
pub fn render<'a>(projection: &Projection, rows: impl IntoIterator<Item = &'a UserRow>) -> Vec<u8> {
    let mut w = writer(Vec::new());
    w.write_record(projection.header()).expect("write to Vec");
    for row in rows {
        w.write_record(projection.record(row)).expect("write to Vec");
    }
    w.into_inner().expect("flush to Vec")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_keeps_request_order() {
        let p = Projection::parse("login,country,sponsor_count").unwrap();
        assert_eq!(p.header(), ["login", "country", "sponsor_count"]);
        assert!(Projection::parse("login,login").is_err());
        let err = Projection::parse("login,stars").unwrap_err();
        assert_eq!(err.body.field.as_deref(), Some("fields"));
        assert!(err.body.message.contains("quality_flag"));
    }

    #[test]
    fn money_formats() {
        assert_eq!(usd_decimal(500), "5.00");
        assert_eq!(usd_decimal(1234), "12.34");
        assert_eq!(whole_usd(1999), 19);
    }
}
