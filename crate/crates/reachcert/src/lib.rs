//! Certificate workbench for reach-avoid analysis of stochastic discrete-time
//! systems `x(l+1) = f(x(l), theta(l))` with i.i.d. disturbances.
//!
//! The crate has three layers that deliberately do not trust each other:
//!
//! * **Conditions** ([`conditions`]): nine barrier-style sufficient conditions,
//!   each encoded as a list of residual clauses `residual(x) <= 0` over a
//!   region, together with the probability bound the condition certifies.
//! * **Verifier** ([`verifier`]): a sound grid checker. It covers each clause
//!   domain with cells and discharges `residual(center) + L * r_cell <= 0`
//!   using certified Lipschitz bounds from interval arithmetic, so a
//!   `Certified` verdict is a proof up to floating-point round-off, not a
//!   sampling claim.
//! * **Oracle** ([`oracle`]): an independent Monte Carlo / value-iteration
//!   estimator of the true reach-avoid probability, used to cross-examine
//!   certified bounds rather than to produce them.
//!
//! [`cegis`] closes the loop: train certificate templates on sampled residual
//! hinge losses, verify soundly, feed counterexamples back.
//!
//! With the default `parallel` feature the hot loops (grid sweeps, Monte
//! Carlo batches, loss evaluation) run on rayon; disabling the feature gives a
//! dependency-free sequential build with bit-identical results.

pub mod benchmarks;
pub mod cegis;
pub mod certificate;
pub mod conditions;
pub mod distribution;
pub mod error;
pub mod exec;
pub mod expr;
pub mod interval;
pub mod oracle;
pub mod problem;
pub mod quadrature;
pub mod region;
pub mod report;
pub mod system;
pub mod verifier;

pub use error::{Error, Result};
