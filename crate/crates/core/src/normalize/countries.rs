//! Bundled canonical country list.

use std::collections::HashMap;
use std::sync::OnceLock;

const COUNTRIES: &str = include_str!("../../data/countries.txt");
const ALIASES: &str = include_str!("../../data/country_aliases.txt");

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Every canonical country name, in file order.
pub fn all() -> &'static [&'static str] {
    static LIST: OnceLock<Vec<&'static str>> = OnceLock::new();
    LIST.get_or_init(|| data_lines(COUNTRIES).collect())
}

fn lookup() -> &'static HashMap<String, &'static str> {
    static MAP: OnceLock<HashMap<String, &'static str>> = OnceLock::new();
    MAP.get_or_init(|| {
        let mut map: HashMap<String, &'static str> =
            all().iter().map(|c| (c.to_lowercase(), *c)).collect();
        for line in data_lines(ALIASES) {
            let (alias, canonical) = line.split_once('|').expect("alias|canonical");
            let canonical = *map
                .get(&canonical.to_lowercase())
                .unwrap_or_else(|| panic!("alias target {canonical} not canonical"));
            map.insert(alias.to_lowercase(), canonical);
        }
        map
    })
}

pub fn is_canonical(name: &str) -> bool {
    all().contains(&name)
}

/// Maps a canonical name or known alias (case-insensitive) to the canonical
/// spelling.
pub fn canonicalize(name: &str) -> Option<&'static str> {
    lookup().get(&name.trim().to_lowercase()).copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_is_iso_sized_and_unique() {
        let list = all();
        assert!(list.len() >= 249);
        let unique: std::collections::HashSet<_> = list.iter().collect();
        assert_eq!(unique.len(), list.len());
    }

    #[test]
    fn aliases_resolve() {
        assert_eq!(canonicalize("United States of America"), Some("United States"));
        assert_eq!(canonicalize("uk"), Some("United Kingdom"));
        assert_eq!(canonicalize("japan"), Some("Japan"));
        assert_eq!(canonicalize("Atlantis"), None);
    }
}
