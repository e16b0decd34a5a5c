//! Robust multigroup multicast beamforming under ellipsoidal channel uncertainty.
//!
//! The crate computes transmit beamformers that keep every user's worst-case
//! SINR above a target (power minimization) or maximize the smallest worst-case
//! SINR under a power budget (max-min fairness). Both designs replace the
//! semi-infinite robust SINR constraint with a conservative closed-form bound and
//! then run a majorization-minimization loop over second-order cone programs.
//!
//! Module map:
//!
//! - [`scenario`]: problem instances, channel generation, error sampling.
//! - [`robust_bounds`]: SINR, the conservative bound, its linearization, and
//!   Monte-Carlo worst-case evaluation.
//! - [`socp`]: real-valued cone programs for the convex subproblems.
//! - [`solver`]: interior-point solve of a [`socp::ConeProgram`].
//! - [`algorithms`]: the power-minimization and max-min-fair MM loops.
//! - [`harness`]: experiment sweeps, CSV output and file formats used by the CLI.

pub mod algorithms;
pub mod error;
pub mod harness;
pub mod robust_bounds;
pub mod scenario;
pub mod socp;
pub mod solver;

pub use error::{Error, Result};
pub use scenario::{Beamformer, PowerMode, Scenario};
