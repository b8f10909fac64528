//! Capability/requirement metadata for packaged ML models: semantic
//! versions, the attribute filter language, manifests, repository indexes,
//! a backtracking resolver, and the model package format.

pub mod digest;
pub mod filter;
pub mod mlpkg;
pub mod model;
pub mod repo;
pub mod resolver;
pub mod semver;
