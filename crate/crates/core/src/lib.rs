//! Solvers for discrete hedonic markets.
//!
//! A hedonic market matches producers and consumers through priced
//! qualities rather than with each other directly. This crate computes
//! equilibrium prices and allocations three ways:
//!
//! * [`flow`] — exact equilibria via a maximum-surplus network flow over
//!   the producer → quality → consumer graph, with integral allocations
//!   for integral masses and extremal dual (price-bound) extraction;
//! * [`smooth`] — unique smooth equilibria under unobserved taste
//!   heterogeneity (logit or empirical shocks), by convex minimization of
//!   the social-welfare price functional;
//! * [`identify`] — recovery of the surplus primitives from observed
//!   allocation shares and prices through Legendre-Fenchel conjugates of
//!   the expected-indirect-utility functions.
//!
//! [`simulate`] draws finite synthetic populations with reproducible
//! counter-based shocks and runs the full solve → observe → identify
//! round trip. The crate is `no_std` (with `alloc`); IO and the CLI live
//! in the companion `hedonic-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod choice;
pub mod flow;
pub mod identify;
pub mod market;
pub mod math;
pub mod simulate;
pub mod smooth;
