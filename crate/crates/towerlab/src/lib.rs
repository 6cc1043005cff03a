//! Exactly samplable tower models with a measurable statistics pipeline.
//!
//! The crate builds symbolic tower models over prescribed return-time
//! distributions, their invariant (SRB) measures and quotient towers,
//! finite-rank transfer operators on cylinder functions, observable
//! discretisations and coboundary decompositions, and ensemble estimators
//! for correlation decay, (maximal) large deviations, recurrence tails and
//! expansion times, together with decay-rate fitting. The `towerlab` binary
//! drives batch experiments from flat config files and runs the built-in
//! verification suite.
//!
//! Points are itineraries first: separation times, quotient projections and
//! semiconjugacies are exact on symbols, and numeric coordinates are derived
//! views. All randomness is counter-based, so every sampler is a pure
//! function of `(seed, index)` and results are independent of worker count.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod fit;
pub mod measures;
pub mod numeric;
pub mod observables;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod systems;
pub mod tower;
pub mod transfer;
pub mod verify;

pub use error::{Error, Result};
pub use tower::{
    Branch, GeometricCoords, Past, ReturnTimeSpec, SeparationTime, Symbol, TowerPoint,
};
