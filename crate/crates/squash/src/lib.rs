//! Squashing-model existence checker for optical threshold-detector
//! measurements.
//!
//! A multi-photon polarization measurement (BB84 or six-state threshold
//! detection with double-click post-processing) can sometimes be represented
//! as a quantum channel into a single qubit followed by the ideal qubit
//! measurement. This crate decides whether such a squashing map exists:
//! it builds the measurement POVMs on each photon-number block, assembles
//! the linear constraints the channel's Choi operator must satisfy, and
//! settles positive-semidefiniteness either exactly (unique solutions) or by
//! alternating projections. The answer is an explicit channel in Kraus form
//! when one exists, or a negativity witness when none does.
//!
//! The BB84 detector admits a squasher on every block (the odd-block channel
//! has a closed form, [`solver::bb84_odd_closed_form`]); the six-state
//! detector stops admitting one at three photons, certified by a witness
//! with normalized expectation -1/8.

pub mod cli;
pub mod detector;
pub mod fock;
pub mod operator;
pub mod report;
pub mod solver;

pub use detector::{build_full_povm, build_target_povm, Povm, Protocol};
pub use operator::Operator;
pub use solver::{check_protocol, CompositeSquasher, Verdict, VerdictStatus};
