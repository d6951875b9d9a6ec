//! Shared data types for the sponsorship graph.
//!
//! Every record here is a plain value object. Validation lives next to the
//! types so that the store, the scheduler and the API agree on what a
//! storable record looks like.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::normalize::{classify_quality, countries};

/// First calendar year with platform activity. Earlier years signal corrupt
/// provider data.
pub const FIRST_ACTIVITY_YEAR: i32 = 2008;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AccountType {
    User,
    Org,
}

impl AccountType {
    pub fn as_str(self) -> &'static str {
        match self {
            AccountType::User => "User",
            AccountType::Org => "Org",
        }
    }
}

impl fmt::Display for AccountType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccountType {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "User" | "user" => Ok(AccountType::User),
            "Org" | "org" | "Organization" => Ok(AccountType::Org),
            _ => Err(ParseEnumError::new("account_type", s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PronounCategory {
    Masculine,
    Feminine,
    OtherNeutral,
    Unspecified,
}

impl PronounCategory {
    pub const ALL: [PronounCategory; 4] = [
        PronounCategory::Masculine,
        PronounCategory::Feminine,
        PronounCategory::OtherNeutral,
        PronounCategory::Unspecified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PronounCategory::Masculine => "Masculine",
            PronounCategory::Feminine => "Feminine",
            PronounCategory::OtherNeutral => "OtherNeutral",
            PronounCategory::Unspecified => "Unspecified",
        }
    }

    pub fn is_specified(self) -> bool {
        self != PronounCategory::Unspecified
    }
}

impl fmt::Display for PronounCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PronounCategory {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PronounCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseEnumError::new("pronoun_category", s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QualityFlag {
    High,
    Medium,
    Low,
}

impl QualityFlag {
    pub const ALL: [QualityFlag; 3] = [QualityFlag::High, QualityFlag::Medium, QualityFlag::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            QualityFlag::High => "High",
            QualityFlag::Medium => "Medium",
            QualityFlag::Low => "Low",
        }
    }
}

impl fmt::Display for QualityFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityFlag {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QualityFlag::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseEnumError::new("quality_flag", s))
    }
}

/// Participation role derived from live sponsorship edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Sponsored,
    Sponsoring,
    Both,
    Neither,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Sponsored => "Sponsored",
            Role::Sponsoring => "Sponsoring",
            Role::Both => "Both",
            Role::Neither => "Neither",
        }
    }

    pub fn from_flags(receives: bool, gives: bool) -> Role {
        match (receives, gives) {
            (true, true) => Role::Both,
            (true, false) => Role::Sponsored,
            (false, true) => Role::Sponsoring,
            (false, false) => Role::Neither,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Role::Sponsored, Role::Sponsoring, Role::Both, Role::Neither]
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseEnumError::new("role", s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {field} value {value:?}")]
pub struct ParseEnumError {
    pub field: &'static str,
    pub value: String,
}

impl ParseEnumError {
    fn new(field: &'static str, value: &str) -> Self {
        Self {
            field,
            value: value.to_string(),
        }
    }
}

/// Whether a record came from a full profile fetch or was only discovered as
/// an edge endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Fetched,
    Stub,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Fetched => "fetched",
            Provenance::Stub => "stub",
        }
    }
}

impl FromStr for Provenance {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fetched" => Ok(Provenance::Fetched),
            "stub" => Ok(Provenance::Stub),
            _ => Err(ParseEnumError::new("provenance", s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoResolution {
    pub country: String,
    pub importance: f64,
    pub resolved_from: String,
    pub resolved_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub login: String,
    pub account_type: AccountType,
    pub display_name: Option<String>,
    pub location_raw: Option<String>,
    pub geo: Option<GeoResolution>,
    pub pronouns_raw: Option<String>,
    pub pronoun_category: PronounCategory,
    /// Signed so that corrupt provider data can be represented and rejected.
    pub sponsor_count: i64,
    pub sponsoring_count: i64,
    pub sponsorable: bool,
    /// Minimum published tier, USD cents per month.
    pub min_tier_cents: Option<i64>,
    /// Unknown for discovered stubs.
    pub created_at: Option<DateTime<Utc>>,
    pub first_seen_at: DateTime<Utc>,
    /// `None` until the first full fetch.
    pub last_fetched_at: Option<DateTime<Utc>>,
    pub quality_flag: QualityFlag,
    pub provenance: Provenance,
    /// Tombstone marker for accounts that disappeared upstream.
    pub retired: bool,
}

impl UserRecord {
    /// A placeholder for an account seen only as an edge endpoint.
    pub fn stub(login: impl Into<String>, now: DateTime<Utc>) -> Self {
        UserRecord {
            login: login.into(),
            account_type: AccountType::User,
            display_name: None,
            location_raw: None,
            geo: None,
            pronouns_raw: None,
            pronoun_category: PronounCategory::Unspecified,
            sponsor_count: 0,
            sponsoring_count: 0,
            sponsorable: false,
            min_tier_cents: None,
            created_at: None,
            first_seen_at: now,
            last_fetched_at: None,
            quality_flag: QualityFlag::Low,
            provenance: Provenance::Stub,
            retired: false,
        }
    }

    pub fn is_analyzable(&self) -> bool {
        !self.retired && self.provenance == Provenance::Fetched
    }
}

/// A reason a [`UserRecord`] cannot be stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyLogin,
    SponsorCountNegative,
    SponsoringCountNegative,
    PronounCategoryInconsistent,
    QualityFlagInconsistent,
    ImportanceOutOfRange,
    UnknownCountry(String),
    MinTierNotPositive,
    FetchedBeforeFirstSeen,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyLogin => f.write_str("login empty"),
            Violation::SponsorCountNegative => f.write_str("sponsor_count negative"),
            Violation::SponsoringCountNegative => f.write_str("sponsoring_count negative"),
            Violation::PronounCategoryInconsistent => f.write_str("pronoun category inconsistent"),
            Violation::QualityFlagInconsistent => f.write_str("quality flag inconsistent"),
            Violation::ImportanceOutOfRange => f.write_str("geocode importance out of range"),
            Violation::UnknownCountry(c) => write!(f, "country not canonical: {c}"),
            Violation::MinTierNotPositive => f.write_str("min_tier_cents not positive"),
            Violation::FetchedBeforeFirstSeen => f.write_str("last_fetched_at before first_seen_at"),
        }
    }
}

/// Lists every invariant the record breaks. An empty list means storable.
pub fn validate_user_record(record: &UserRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.login.trim().is_empty() {
        out.push(Violation::EmptyLogin);
    }
    if record.sponsor_count < 0 {
        out.push(Violation::SponsorCountNegative);
    }
    if record.sponsoring_count < 0 {
        out.push(Violation::SponsoringCountNegative);
    }
    let has_pronouns = record
        .pronouns_raw
        .as_deref()
        .is_some_and(|p| !p.trim().is_empty());
    if has_pronouns == (record.pronoun_category == PronounCategory::Unspecified) {
        out.push(Violation::PronounCategoryInconsistent);
    }
    if let Some(geo) = &record.geo {
        if !(0.0..=1.0).contains(&geo.importance) {
            out.push(Violation::ImportanceOutOfRange);
        }
        if !countries::is_canonical(&geo.country) {
            out.push(Violation::UnknownCountry(geo.country.clone()));
        }
    }
    if classify_quality(record.pronoun_category, record.geo.as_ref()) != record.quality_flag {
        out.push(Violation::QualityFlagInconsistent);
    }
    if record.min_tier_cents.is_some_and(|c| c <= 0) {
        out.push(Violation::MinTierNotPositive);
    }
    if record
        .last_fetched_at
        .is_some_and(|fetched| fetched < record.first_seen_at)
    {
        out.push(Violation::FetchedBeforeFirstSeen);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SponsorshipEdge {
    pub sponsor_login: String,
    pub recipient_login: String,
    pub first_seen_at: DateTime<Utc>,
    pub last_seen_at: DateTime<Utc>,
    pub ended_at: Option<DateTime<Utc>>,
}

impl SponsorshipEdge {
    pub fn is_live(&self) -> bool {
        self.ended_at.is_none()
    }
}

/// Contribution counts for one account in one calendar year.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearActivity {
    pub login: String,
    pub year: i32,
    pub commits: u64,
    pub pull_requests: u64,
    pub issues: u64,
    pub reviews: u64,
    /// The year was fully in the past when fetched; the record is frozen.
    pub complete: bool,
}

impl YearActivity {
    pub fn validate(&self) -> Result<(), String> {
        if self.login.is_empty() {
            return Err("login empty".into());
        }
        if self.year < FIRST_ACTIVITY_YEAR {
            return Err(format!(
                "year {} predates {FIRST_ACTIVITY_YEAR}",
                self.year
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub login: String,
    pub due_at: DateTime<Utc>,
    pub active: bool,
    pub discovered_via: Option<String>,
    pub enqueued_at: DateTime<Utc>,
}

/// Classifies `login` from the live edges incident to it.
///
/// Edges not touching `login` and ended edges are ignored.
pub fn classify_role<'a, I>(login: &str, edges: I) -> Role
where
    I: IntoIterator<Item = &'a SponsorshipEdge>,
{
    let mut receives = false;
    let mut gives = false;
    for edge in edges.into_iter().filter(|e| e.is_live()) {
        receives |= edge.recipient_login == login;
        gives |= edge.sponsor_login == login;
    }
    Role::from_flags(receives, gives)
}

/// Live (sponsor, recipient) pairs that appear more than once.
pub fn duplicate_live_pairs(edges: &[SponsorshipEdge]) -> Vec<(String, String)> {
    let mut seen = BTreeSet::new();
    let mut dups = BTreeSet::new();
    for e in edges.iter().filter(|e| e.is_live()) {
        let key = (e.sponsor_login.clone(), e.recipient_login.clone());
        if !seen.insert(key.clone()) {
            dups.insert(key);
        }
    }
    dups.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 3, 1, 0, 0, 0).unwrap()
    }

    pub(crate) fn record(login: &str) -> UserRecord {
        UserRecord {
            login: login.into(),
            account_type: AccountType::User,
            display_name: Some("Alice".into()),
            location_raw: None,
            geo: None,
            pronouns_raw: None,
            pronoun_category: PronounCategory::Unspecified,
            sponsor_count: 3,
            sponsoring_count: 0,
            sponsorable: true,
            min_tier_cents: Some(500),
            created_at: Some(t0()),
            first_seen_at: t0(),
            last_fetched_at: Some(t0()),
            quality_flag: QualityFlag::Low,
            provenance: Provenance::Fetched,
            retired: false,
        }
    }

    fn edge(s: &str, r: &str) -> SponsorshipEdge {
        SponsorshipEdge {
            sponsor_login: s.into(),
            recipient_login: r.into(),
            first_seen_at: t0(),
            last_seen_at: t0(),
            ended_at: None,
        }
    }

    #[test]
    fn well_formed_record_is_valid() {
        assert!(validate_user_record(&record("alice")).is_empty());
    }

    #[test]
    fn negative_sponsor_count_is_reported() {
        let mut r = record("alice");
        r.sponsor_count = -1;
        let v = validate_user_record(&r);
        assert_eq!(v, vec![Violation::SponsorCountNegative]);
        assert_eq!(v[0].to_string(), "sponsor_count negative");
    }

    #[test]
    fn category_without_pronouns_is_reported() {
        let mut r = record("alice");
        r.pronoun_category = PronounCategory::Feminine;
        // keep the quality flag consistent so only one violation remains
        r.quality_flag = QualityFlag::Medium;
        let v = validate_user_record(&r);
        assert_eq!(v, vec![Violation::PronounCategoryInconsistent]);
        assert_eq!(v[0].to_string(), "pronoun category inconsistent");
    }

    #[test]
    fn stale_quality_flag_is_reported() {
        let mut r = record("alice");
        r.quality_flag = QualityFlag::High;
        assert_eq!(validate_user_record(&r), vec![Violation::QualityFlagInconsistent]);
    }

    #[test]
    fn geo_must_be_canonical_and_bounded() {
        let mut r = record("alice");
        r.geo = Some(GeoResolution {
            country: "Atlantis".into(),
            importance: 1.5,
            resolved_from: "atlantis".into(),
            resolved_at: t0(),
        });
        let v = validate_user_record(&r);
        assert!(v.contains(&Violation::ImportanceOutOfRange));
        assert!(v.contains(&Violation::UnknownCountry("Atlantis".into())));
    }

    #[test]
    fn role_cases() {
        let incoming = [edge("bob", "alice")];
        assert_eq!(classify_role("alice", &incoming), Role::Sponsored);
        let both = [edge("bob", "alice"), edge("alice", "carol")];
        assert_eq!(classify_role("alice", &both), Role::Both);
        assert_eq!(classify_role("alice", &[edge("alice", "x")]), Role::Sponsoring);
        assert_eq!(classify_role("alice", &[]), Role::Neither);
        let mut ended = edge("bob", "alice");
        ended.ended_at = Some(t0());
        assert_eq!(classify_role("alice", &[ended]), Role::Neither);
    }

    #[test]
    fn duplicate_live_pairs_ignores_ended() {
        let mut ended = edge("a", "b");
        ended.ended_at = Some(t0());
        let edges = vec![edge("a", "b"), ended.clone(), edge("a", "c")];
        assert!(duplicate_live_pairs(&edges).is_empty());
        let edges = vec![edge("a", "b"), edge("a", "b")];
        assert_eq!(duplicate_live_pairs(&edges), vec![("a".into(), "b".into())]);
    }

    #[test]
    fn year_activity_rejects_pre_platform_years() {
        let a = YearActivity {
            login: "alice".into(),
            year: 2007,
            commits: 0,
            pull_requests: 0,
            issues: 0,
            reviews: 0,
            complete: true,
        };
        assert!(a.validate().is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn role_is_a_partition(pairs in proptest::collection::vec((0u8..6, 0u8..6), 0..30)) {
            let t = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
            let edges: Vec<SponsorshipEdge> = pairs
                .iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| SponsorshipEdge {
                    sponsor_login: format!("u{a}"),
                    recipient_login: format!("u{b}"),
                    first_seen_at: t,
                    last_seen_at: t,
                    ended_at: None,
                })
                .collect();
            let mut counts = std::collections::HashMap::new();
            for u in 0..6 {
                let login = format!("u{u}");
                let role = classify_role(&login, &edges);
                let receives = edges.iter().any(|e| e.recipient_login == login);
                let gives = edges.iter().any(|e| e.sponsor_login == login);
                prop_assert_eq!(role == Role::Both, receives && gives);
                prop_assert_eq!(role == Role::Neither, !receives && !gives);
                *counts.entry(role).or_insert(0usize) += 1;
            }
            prop_assert_eq!(counts.values().sum::<usize>(), 6);
        }
    }
}
