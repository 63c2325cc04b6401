//! Acceptance report for the hgat model; see `tests/acceptance.rs`.
