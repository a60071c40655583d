//! Laboratory for Markov branching trees: split-law combinatorics, exact
//! shape counting, tree samplers, and scaling-limit probes.
//!
//! The crate is organised around a handful of interlocking pieces:
//!
//! - [`partitions`]: integer/set partitions, exact counting formulas, the
//!   paintbox sampler.
//! - [`trees`]: rooted unordered trees, canonical order, enumeration,
//!   edge-length trees and chain reductions.
//! - [`splitlaws`]: the families of split laws `q = (q_n)` driving Markov
//!   branching dynamics, plus the hypothesis-(H) scaling probe.
//! - [`samplers`]: the leaf model `P^q_n`, the vertex model `Q^q_n`, the
//!   partition chain, and exact small-`n` tree laws.
//! - [`polya`]: Otter-style counting of unordered trees, uniform generation,
//!   rank/unrank, and the stepwise coupling with independent subtrees.
//! - [`fragmentation`]: dislocation measures on the simplex, restricted
//!   sampling, and a crude continuum-tree approximation.
//! - [`stats`]: the small statistical toolkit used by tests and the CLI.
//!
//! All randomness is explicit: every sampler takes an RNG handle, and
//! [`rng::stream`] derives independent deterministic streams from one master
//! seed so parallel replication is reproducible.

pub mod fragmentation;
pub mod partitions;
pub mod polya;
pub mod quad;
pub mod rng;
pub mod samplers;
pub mod splitlaws;
pub mod stats;
pub mod trees;
