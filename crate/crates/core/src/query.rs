//! Filtered, sorted and paginated views over analyzable users.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::str::FromStr;

use serde::Serialize;

use crate::model::{AccountType, PronounCategory, QualityFlag, Role};
use crate::normalize::{countries, estimate_monthly_earnings};
use crate::store::UserRow;

pub const DEFAULT_PAGE_SIZE: u64 = 50;
pub const MAX_PAGE_SIZE: u64 = 500;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    #[default]
    SponsorCount,
    SponsoringCount,
    EstimatedEarnings,
    Login,
    LastFetchedAt,
}

impl SortKey {
    pub const ALL: [SortKey; 5] = [
        SortKey::SponsorCount,
        SortKey::SponsoringCount,
        SortKey::EstimatedEarnings,
        SortKey::Login,
        SortKey::LastFetchedAt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SortKey::SponsorCount => "sponsor_count",
            SortKey::SponsoringCount => "sponsoring_count",
            SortKey::EstimatedEarnings => "estimated_earnings",
            SortKey::Login => "login",
            SortKey::LastFetchedAt => "last_fetched_at",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SortDir {
    Asc,
    #[default]
    Desc,
}

/// A rejected query parameter.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct QueryError {
    pub field: String,
    pub message: String,
}

impl QueryError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserQuery {
    pub country: Option<String>,
    pub account_type: Option<AccountType>,
    /// Never Neither; only participating roles can be filtered on.
    pub role: Option<Role>,
    pub pronoun_category: Option<PronounCategory>,
    pub quality_flag: Option<QualityFlag>,
    pub min_sponsors: Option<i64>,
    pub sort_by: SortKey,
    pub sort_dir: SortDir,
    pub page: u64,
    pub page_size: u64,
}

impl Default for UserQuery {
    fn default() -> Self {
        Self {
            country: None,
            account_type: None,
            role: None,
            pronoun_category: None,
            quality_flag: None,
            min_sponsors: None,
            sort_by: SortKey::default(),
            sort_dir: SortDir::default(),
            page: 1,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

fn parse_enum<T: FromStr>(field: &str, value: &str, allowed: &[&str]) -> Result<T, QueryError> {
    value
        .parse()
        .map_err(|_| QueryError::new(field, format!("{value:?} is not one of {}", allowed.join(", "))))
}

fn parse_int(field: &str, value: &str, min: u64, max: u64) -> Result<u64, QueryError> {
    match value.parse::<u64>() {
        Ok(n) if (min..=max).contains(&n) => Ok(n),
        _ if max == u64::MAX => Err(QueryError::new(field, format!("must be an integer >= {min}, got {value:?}"))),
        _ => Err(QueryError::new(field, format!("must be an integer in {min}..={max}, got {value:?}"))),
    }
}

impl UserQuery {
    pub const KEYS: [&'static str; 10] = [
        "country",
        "account_type",
        "role",
        "pronoun_category",
        "quality_flag",
        "min_sponsors",
        "sort_by",
        "sort_dir",
        "page",
        "page_size",
    ];

    /// Parses query-string pairs. Unknown names, repeated names, empty
    /// values and invalid values are all rejected.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self, QueryError> {
        let mut q = UserQuery::default();
        let mut seen = BTreeSet::new();
        for (key, value) in pairs {
            let (key, value) = (key.as_ref(), value.as_ref());
            if !Self::KEYS.contains(&key) {
                return Err(QueryError::new(key, "unknown parameter"));
            }
            if !seen.insert(key) {
                return Err(QueryError::new(key, "given more than once"));
            }
            if value.is_empty() {
                return Err(QueryError::new(key, "must not be empty"));
            }
            match key {
                "country" => {
                    let c = countries::canonicalize(value)
                        .ok_or_else(|| QueryError::new(key, format!("unknown country {value:?}")))?;
                    q.country = Some(c.to_string());
                }
                "account_type" => q.account_type = Some(parse_enum(key, value, &["User", "Org"])?),
                "role" => {
                    let allowed = ["Sponsored", "Sponsoring", "Both"];
                    let role: Role = parse_enum(key, value, &allowed)?;
                    if role == Role::Neither {
                        return Err(QueryError::new(key, format!("{value:?} is not one of {}", allowed.join(", "))));
                    }
                    q.role = Some(role);
                }
                "pronoun_category" => {
                    q.pronoun_category = Some(parse_enum(
                        key,
                        value,
                        &PronounCategory::ALL.map(PronounCategory::as_str),
                    )?)
                }
                "quality_flag" => {
                    q.quality_flag = Some(parse_enum(key, value, &QualityFlag::ALL.map(QualityFlag::as_str))?)
                }
                "min_sponsors" => q.min_sponsors = Some(parse_int(key, value, 0, i64::MAX as u64)? as i64),
                "sort_by" => {
                    q.sort_by = SortKey::ALL
                        .into_iter()
                        .find(|k| k.as_str() == value)
                        .ok_or_else(|| {
                            QueryError::new(
                                key,
                                format!(
                                    "{value:?} is not one of {}",
                                    SortKey::ALL.map(SortKey::as_str).join(", ")
                                ),
                            )
                        })?
                }
                "sort_dir" => {
                    q.sort_dir = match value {
                        "asc" => SortDir::Asc,
                        "desc" => SortDir::Desc,
                        _ => return Err(QueryError::new(key, format!("{value:?} is not one of asc, desc"))),
                    }
                }
                "page" => q.page = parse_int(key, value, 1, u64::MAX)?,
                "page_size" => q.page_size = parse_int(key, value, 1, MAX_PAGE_SIZE)?,
                _ => unreachable!("key checked above"),
            }
        }
        Ok(q)
    }

    pub fn matches(&self, row: &UserRow) -> bool {
        let r = &row.record;
        self.country
            .as_ref()
            .is_none_or(|c| r.geo.as_ref().is_some_and(|g| &g.country == c))
            && self.account_type.is_none_or(|t| r.account_type == t)
            && self.role.is_none_or(|role| row.role == role)
            && self.pronoun_category.is_none_or(|p| r.pronoun_category == p)
            && self.quality_flag.is_none_or(|f| r.quality_flag == f)
            && self.min_sponsors.is_none_or(|m| r.sponsor_count >= m)
    }

    fn compare(&self, a: &UserRow, b: &UserRow) -> Ordering {
        let (x, y) = (&a.record, &b.record);
        let primary = match self.sort_by {
            SortKey::SponsorCount => x.sponsor_count.cmp(&y.sponsor_count),
            SortKey::SponsoringCount => x.sponsoring_count.cmp(&y.sponsoring_count),
            SortKey::EstimatedEarnings => earnings_cents(a).cmp(&earnings_cents(b)),
            SortKey::Login => Ordering::Equal,
            SortKey::LastFetchedAt => x.last_fetched_at.cmp(&y.last_fetched_at),
        };
        let primary = match self.sort_dir {
            SortDir::Asc => primary,
            SortDir::Desc => primary.reverse(),
        };
        let login = match (self.sort_by, self.sort_dir) {
            (SortKey::Login, SortDir::Desc) => y.login.cmp(&x.login),
            _ => x.login.cmp(&y.login),
        };
        primary.then(login)
    }

    /// Every matching row in sort order.
    pub fn select<'a>(&self, rows: &'a [UserRow]) -> Vec<&'a UserRow> {
        self.select_indices(rows).into_iter().map(|i| &rows[i]).collect()
    }

    /// Positions in `rows` of every matching row, in sort order.
    pub fn select_indices(&self, rows: &[UserRow]) -> Vec<usize> {
        let mut out: Vec<usize> = (0..rows.len()).filter(|&i| self.matches(&rows[i])).collect();
        out.sort_by(|&a, &b| self.compare(&rows[a], &rows[b]));
        out
    }

    /// One page of [`select`](Self::select).
    pub fn page<'a>(&self, rows: &'a [UserRow]) -> Page<&'a UserRow> {
        let all = self.select(rows);
        let total_matching = all.len() as u64;
        let start = (self.page - 1).saturating_mul(self.page_size);
        let items = all
            .into_iter()
            .skip(usize::try_from(start).unwrap_or(usize::MAX))
            .take(self.page_size as usize)
            .collect();
        Page {
            items,
            total_matching,
            page: self.page,
            page_size: self.page_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub total_matching: u64,
    pub page: u64,
    pub page_size: u64,
}

pub fn earnings_cents(row: &UserRow) -> Option<i64> {
    estimate_monthly_earnings(row.record.min_tier_cents, row.record.sponsor_count)
}
