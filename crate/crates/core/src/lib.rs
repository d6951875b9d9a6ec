//! Core of the sponsorship observatory: data model, remote source access,
//! traversal scheduling, normalization, storage, analytics and the
//! simulation harness used to test all of it deterministically.

pub mod analytics;
pub mod clock;
pub mod events;
pub mod model;
pub mod normalize;
pub mod query;
pub mod scheduler;
pub mod simulation;
pub mod source;
pub mod store;
