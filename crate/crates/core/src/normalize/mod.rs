//! Turns raw profile strings into research fields: country, pronoun
//! category, quality flag, earnings lower bound and activity totals.

pub mod countries;
mod geocode;
mod location;

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use geocode::{
    bundled_corpus, geocode_location, CachedGeo, CandidateAddress, CassetteGeocoder, CorpusEntry,
    GeoCandidate, GeoOutcome, GeocodeCache, GeocodeError, Geocoder, NominatimGeocoder,
    NOMINATIM_URL,
};
pub use location::{normalize_location_string, CleanedLocation, PRIVACY_STRINGS};

use crate::model::{GeoResolution, PronounCategory, QualityFlag, YearActivity};

/// Geocoder importance a match must exceed to count as unambiguous.
pub const HIGH_CONFIDENCE_IMPORTANCE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub enum LocationOutcome {
    Resolved(GeoResolution),
    PrivacyString,
    Empty,
    Unresolvable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationNormalization {
    pub raw: String,
    pub cleaned: String,
    pub outcome: LocationOutcome,
}

impl LocationNormalization {
    pub fn geo(&self) -> Option<&GeoResolution> {
        match &self.outcome {
            LocationOutcome::Resolved(g) => Some(g),
            _ => None,
        }
    }
}

/// Location cleaning plus cached geocoding.
#[derive(Clone)]
pub struct Normalizer {
    geocoder: Arc<dyn Geocoder>,
    cache: Arc<GeocodeCache>,
}

impl Normalizer {
    pub fn new(geocoder: Arc<dyn Geocoder>, cache: Arc<GeocodeCache>) -> Self {
        Self { geocoder, cache }
    }

    pub fn cache(&self) -> &Arc<GeocodeCache> {
        &self.cache
    }

    pub fn geocoder(&self) -> &Arc<dyn Geocoder> {
        &self.geocoder
    }

    /// Privacy and empty strings never reach the geocoder.
    pub fn normalize_location(&self, raw: &str, now: DateTime<Utc>) -> Result<LocationNormalization, GeocodeError> {
        let (cleaned, outcome) = match normalize_location_string(raw) {
            CleanedLocation::Empty => (String::new(), LocationOutcome::Empty),
            CleanedLocation::PrivacyString(s) => (s, LocationOutcome::PrivacyString),
            CleanedLocation::Query(q) => {
                let outcome = match geocode_location(&q, &self.cache, self.geocoder.as_ref(), now)? {
                    GeoOutcome::Resolved(g) => LocationOutcome::Resolved(g),
                    GeoOutcome::Unresolvable => LocationOutcome::Unresolvable,
                };
                (q, outcome)
            }
        };
        Ok(LocationNormalization {
            raw: raw.to_string(),
            cleaned,
            outcome,
        })
    }
}

const MASCULINE: [&str; 3] = ["he", "him", "his"];
const FEMININE: [&str; 3] = ["she", "her", "hers"];

/// Categorizes a self-declared pronoun string.
///
/// Tokens are split on `/` and whitespace and compared case-insensitively.
/// Only-masculine tokens give `Masculine`, only-feminine tokens give
/// `Feminine`; any other non-empty value (they/them, mixed sets, neopronouns,
/// "any") is `OtherNeutral`. Absent or blank is `Unspecified`.
pub fn extract_pronoun_category(pronouns_raw: Option<&str>) -> PronounCategory {
    let tokens: BTreeSet<String> = pronouns_raw
        .unwrap_or("")
        .split(|c: char| c == '/' || c.is_whitespace())
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        return PronounCategory::Unspecified;
    }
    if tokens.iter().all(|t| MASCULINE.contains(&t.as_str())) {
        PronounCategory::Masculine
    } else if tokens.iter().all(|t| FEMININE.contains(&t.as_str())) {
        PronounCategory::Feminine
    } else {
        PronounCategory::OtherNeutral
    }
}

/// Confidence in a record's demographic fields.
pub fn classify_quality(pronoun_category: PronounCategory, geo: Option<&GeoResolution>) -> QualityFlag {
    let pronouns = pronoun_category.is_specified();
    let location = geo.is_some_and(|g| g.importance > HIGH_CONFIDENCE_IMPORTANCE);
    match (pronouns, location) {
        (true, true) => QualityFlag::High,
        (true, false) | (false, true) => QualityFlag::Medium,
        (false, false) => QualityFlag::Low,
    }
}

/// Lower bound on monthly income in cents: minimum tier times sponsor count.
/// Absent when no tier is published.
pub fn estimate_monthly_earnings(min_tier_cents: Option<i64>, sponsor_count: i64) -> Option<i64> {
    min_tier_cents.map(|tier| tier.saturating_mul(sponsor_count.max(0)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityTotals {
    pub commits: u64,
    pub pull_requests: u64,
    pub issues: u64,
    pub reviews: u64,
}

impl ActivityTotals {
    pub fn new(commits: u64, pull_requests: u64, issues: u64, reviews: u64) -> Self {
        Self {
            commits,
            pull_requests,
            issues,
            reviews,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error("duplicate activity year {0}")]
    DuplicateYear(i32),
    #[error("activity records span several logins")]
    MixedLogins,
}

/// Component-wise lifetime totals over one login's yearly records.
pub fn aggregate_activity(records: &[YearActivity]) -> Result<ActivityTotals, AggregateError> {
    let mut years = BTreeSet::new();
    let mut totals = ActivityTotals::default();
    for r in records {
        if r.login != records[0].login {
            return Err(AggregateError::MixedLogins);
        }
        if !years.insert(r.year) {
            return Err(AggregateError::DuplicateYear(r.year));
        }
        totals.commits += r.commits;
        totals.pull_requests += r.pull_requests;
        totals.issues += r.issues;
        totals.reviews += r.reviews;
    }
    Ok(totals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;

    fn geo(importance: f64) -> GeoResolution {
        GeoResolution {
            country: "Germany".into(),
            importance,
            resolved_from: "berlin".into(),
            resolved_at: SimClock::default_start(),
        }
    }

    #[test]
    fn pronoun_rules() {
        assert_eq!(extract_pronoun_category(Some("he/him")), PronounCategory::Masculine);
        assert_eq!(extract_pronoun_category(Some("She/Her")), PronounCategory::Feminine);
        assert_eq!(extract_pronoun_category(Some("she/they")), PronounCategory::OtherNeutral);
        assert_eq!(extract_pronoun_category(Some("they/them")), PronounCategory::OtherNeutral);
        assert_eq!(extract_pronoun_category(Some("he/she")), PronounCategory::OtherNeutral);
        assert_eq!(extract_pronoun_category(Some("any")), PronounCategory::OtherNeutral);
        assert_eq!(extract_pronoun_category(Some("xe/xem")), PronounCategory::OtherNeutral);
        assert_eq!(extract_pronoun_category(Some("HE / HIS")), PronounCategory::Masculine);
        assert_eq!(extract_pronoun_category(None), PronounCategory::Unspecified);
        assert_eq!(extract_pronoun_category(Some("  ")), PronounCategory::Unspecified);
    }

    #[test]
    fn quality_grid() {
        assert_eq!(classify_quality(PronounCategory::Feminine, Some(&geo(0.9))), QualityFlag::High);
        assert_eq!(classify_quality(PronounCategory::Unspecified, Some(&geo(0.9))), QualityFlag::Medium);
        assert_eq!(classify_quality(PronounCategory::Masculine, None), QualityFlag::Medium);
        assert_eq!(classify_quality(PronounCategory::Unspecified, None), QualityFlag::Low);
        assert_eq!(classify_quality(PronounCategory::Feminine, Some(&geo(0.8))), QualityFlag::Medium);
        assert_eq!(classify_quality(PronounCategory::Unspecified, Some(&geo(0.8))), QualityFlag::Low);
    }

    #[test]
    fn earnings() {
        assert_eq!(estimate_monthly_earnings(Some(500), 10), Some(5000));
        assert_eq!(estimate_monthly_earnings(None, 10), None);
        assert_eq!(estimate_monthly_earnings(Some(500), 0), Some(0));
    }

    fn year(y: i32, c: (u64, u64, u64, u64)) -> YearActivity {
        YearActivity {
            login: "alice".into(),
            year: y,
            commits: c.0,
            pull_requests: c.1,
            issues: c.2,
            reviews: c.3,
            complete: true,
        }
    }

    #[test]
    fn activity_sums() {
        assert_eq!(aggregate_activity(&[]).unwrap(), ActivityTotals::default());
        assert_eq!(
            aggregate_activity(&[year(2022, (1, 2, 3, 4)), year(2023, (10, 20, 30, 40))]).unwrap(),
            ActivityTotals::new(11, 22, 33, 44)
        );
        assert_eq!(
            aggregate_activity(&[year(2022, (1, 2, 3, 4)), year(2022, (1, 1, 1, 1))]),
            Err(AggregateError::DuplicateYear(2022))
        );
    }

    #[test]
    fn privacy_and_empty_skip_geocoder() {
        let geocoder = Arc::new(CassetteGeocoder::bundled());
        let n = Normalizer::new(geocoder.clone(), Arc::new(GeocodeCache::new()));
        let now = SimClock::default_start();
        assert_eq!(n.normalize_location("Remote", now).unwrap().outcome, LocationOutcome::PrivacyString);
        assert_eq!(n.normalize_location("", now).unwrap().outcome, LocationOutcome::Empty);
        assert_eq!(geocoder.calls(), 0);
    }

    proptest::proptest! {
        #[test]
        fn earnings_monotone(tier in 1i64..100_000, count in 0i64..10_000, dt in 0i64..1000, dc in 0i64..1000) {
            let base = estimate_monthly_earnings(Some(tier), count).unwrap();
            proptest::prop_assert!(estimate_monthly_earnings(Some(tier + dt), count).unwrap() >= base);
            proptest::prop_assert!(estimate_monthly_earnings(Some(tier), count + dc).unwrap() >= base);
        }
    }
}
