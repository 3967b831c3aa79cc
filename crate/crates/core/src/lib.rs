//! Boundary value exploration: locate candidate boundaries in a program's
//! input space by how sharply its output changes between neighbouring inputs.
//!
//! * [`distance`]: compression, edit and numeric distances; program derivative.
//! * [`sut`]: software-under-test abstraction, a re-implementation of Julia
//!   1.1.1 `Date` construction, synthetic SUTs and an external-process adapter.
//! * [`detect`]: outlier-based boundary search and 1-D diversity scans.
//! * [`explore`]: boundariness walls over lattice regions.
//! * [`api`]: versioned JSON payloads shared by the CLI and HTTP service.

pub mod api;
pub mod detect;
pub mod distance;
pub mod explore;
pub mod sut;
