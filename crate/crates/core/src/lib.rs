//! An exact-solver laboratory for DTW-Mean: computing Fréchet means of
//! univariate time-series samples under the dynamic time warping distance.
//!
//! The crate provides, bottom up:
//!
//! - [`series`]: time-series containers, UCR-format ingestion, block-averaging
//!   reduction, and seeded instance sampling;
//! - [`warping`]: diagonal grid graphs, global warping constraints
//!   (Sakoe-Chiba band, Itakura parallelogram), the constrained quadratic-time
//!   DTW dynamic program, and exhaustive path enumeration at desk scale;
//! - [`bounds`]: simple and improved bounds on mean values, per-index
//!   constrained bounds, and the derived lower bound on the Fréchet function;
//! - [`model`]: a mixed-integer model intermediate representation plus
//!   builders for vertex- and arc-based path formulations crossed with
//!   quadratic big-M, linearized, perspective/outer-approximation, and
//!   implicit-distance objective encodings, with text export;
//! - [`simplex`]: a dense bounded-variable revised simplex solver for the
//!   node relaxations;
//! - [`bnb`]: a deterministic branch-and-bound engine with lazy
//!   outer-approximation and implicit-distance cuts and a Lemma-style
//!   alternating primal heuristic;
//! - [`oracle`]: a brute-force enumerator over warping-path tuples providing
//!   ground-truth optima on tiny instances.

pub mod bnb;
pub mod bounds;
pub mod error;
pub mod model;
pub mod oracle;
pub mod series;
pub mod simplex;
pub mod warping;

pub use error::{Error, Result};
