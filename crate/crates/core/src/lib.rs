//! Toolkit for synthesising and verifying recurrent cleaning schedules for
//! battery-driven robot collectives operating under stochastic room
//! contamination.
//!
//! The pipeline has four stages:
//!
//! 1. [`scenario`] parses and validates a problem instance (room graph,
//!    robots, contamination parameters, utilisation plan, horizon).
//! 2. [`pomdp`] compiles the instance into an explicit reward-enhanced POMDP
//!    whose hidden part is the per-room contamination flags.
//! 3. [`synth`] computes a cost-minimal deterministic time-indexed schedule,
//!    either exactly over reachable belief marginals or with a fixed-grid
//!    approximation of resolution `g`.
//! 4. [`induced`] and [`verify`] replay the schedule on an integer-counter
//!    contamination model and check the recurrence and safety requirements
//!    from the worst state of a declared recurrence area.
//!
//! [`harness`] wires the stages into a CLI and a parameter-sweep experiment
//! that classifies schedules across `(a_bit, pr, g)` points and renders the
//! result as CSV and SVG.

pub mod gen;
pub mod harness;
pub mod induced;
pub mod pomdp;
pub mod scenario;
pub mod synth;
pub mod verify;

pub use scenario::{PlaceId, Scenario};
