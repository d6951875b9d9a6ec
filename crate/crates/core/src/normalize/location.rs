use unicode_normalization::UnicodeNormalization;

/// Location strings that deliberately say nothing about where someone is.
pub const PRIVACY_STRINGS: &[&str] = &[
    "remote",
    "earth",
    "planet earth",
    "worldwide",
    "world",
    "the world",
    "global",
    "the internet",
    "internet",
    "online",
    "cyberspace",
    "the cloud",
    "everywhere",
    "anywhere",
    "nowhere",
    "somewhere",
    "home",
    "127.0.0.1",
    "localhost",
    "/dev/null",
];

/// Result of cleaning a raw location string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CleanedLocation {
    /// Non-empty, not a privacy string: ready to geocode.
    Query(String),
    Empty,
    PrivacyString(String),
}

impl CleanedLocation {
    pub fn query(&self) -> Option<&str> {
        match self {
            CleanedLocation::Query(q) => Some(q),
            _ => None,
        }
    }
}

fn keep(c: char) -> bool {
    c.is_alphanumeric() || c.is_whitespace() || matches!(c, ',' | '.' | '-' | '\'' | '(' | ')' | '/' | '&')
}

/// Unicode-normalizes, strips emoji and symbols, collapses whitespace and
/// case-folds `raw`, then checks the privacy list.
pub fn normalize_location_string(raw: &str) -> CleanedLocation {
    let kept: String = raw.nfkc().filter(|&c| keep(c)).collect();
    let collapsed = kept.split_whitespace().collect::<Vec<_>>().join(" ");
    let cleaned = collapsed
        .trim_matches(|c: char| matches!(c, ',' | '-' | '/' | '&') || c.is_whitespace())
        .to_lowercase();
    if cleaned.is_empty() {
        CleanedLocation::Empty
    } else if PRIVACY_STRINGS.contains(&cleaned.as_str()) {
        CleanedLocation::PrivacyString(cleaned)
    } else {
        CleanedLocation::Query(cleaned)
    }
}
