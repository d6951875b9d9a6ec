use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::source::FixtureData;

/// Logins reachable from the sponsorable accounts by following sponsorship
/// edges in either direction. Breadth-first search over an adjacency list.
pub fn reachable_oracle(data: &FixtureData) -> BTreeSet<String> {
    let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &data.edges {
        adjacency.entry(&e.sponsor).or_default().push(&e.recipient);
        adjacency.entry(&e.recipient).or_default().push(&e.sponsor);
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut frontier: VecDeque<&str> = VecDeque::new();
    for u in data.users.iter().filter(|u| u.sponsorable) {
        if seen.insert(&u.login) {
            frontier.push_back(&u.login);
        }
    }
    while let Some(login) = frontier.pop_front() {
        for &next in adjacency.get(login).into_iter().flatten() {
            if seen.insert(next) {
                frontier.push_back(next);
            }
        }
    }
    seen.into_iter().map(str::to_string).collect()
}

/// Same set as [`reachable_oracle`], computed by sweeping the edge list
/// until nothing changes.
pub fn reachable_naive(data: &FixtureData) -> BTreeSet<String> {
    let mut seen: BTreeSet<String> = data
        .users
        .iter()
        .filter(|u| u.sponsorable)
        .map(|u| u.login.clone())
        .collect();
    loop {
        let before = seen.len();
        for e in &data.edges {
            if seen.contains(&e.sponsor) || seen.contains(&e.recipient) {
                seen.insert(e.sponsor.clone());
                seen.insert(e.recipient.clone());
            }
        }
        if seen.len() == before {
            return seen;
        }
    }
}
