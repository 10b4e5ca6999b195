//! Deterministic simulation and verification of entanglement purification
//! protocols built on scrambling permutations over GF(2^n).
//!
//! The crate is organized bottom-up:
//! - [`gf2n`]: finite-field arithmetic in GF(2^n) for 1 ≤ n ≤ 16
//! - [`scramble`]: scrambling-permutation constructions and their
//!   exhaustive verifier
//! - [`qstate`]: sparse bipartite pure states and measurement primitives
//! - [`protocols`]: the purification protocols, in exact branch-enumeration
//!   and seeded Monte Carlo modes
//! - [`bounds`]: closed-form performance predictions to compare runs against
//! - [`cli`]: the command-line front end
//!
//! The `examples/` directory has a runnable walkthrough per capability.

pub mod bounds;
pub mod cli;
pub mod gf2n;
pub mod protocols;
pub mod qstate;
pub mod scramble;
