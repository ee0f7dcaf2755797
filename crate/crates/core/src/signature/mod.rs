//! Signature type, matching bounds, file format and comparison.

pub mod bounds;
pub mod compare;
pub mod file;
pub mod model;

pub use bounds::{detection_window_ms, effective_bounds, range_bounds, relaxed_bounds, Bound, MatchBounds, MatchStrategy};
pub use compare::{compare_signatures, Comparison};
pub use model::{CommClass, DurationStats, PositionSpec, Provenance, SetSpec, Signature};
