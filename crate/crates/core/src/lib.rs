//! Random iteration of two piecewise-linear interval homeomorphisms with
//! place-dependent probabilities.
//!
//! The crate is organized bottom-up:
//!
//! - [`ifs`]: the maps `f0`, `f1`, their inverses, endpoint exponents, the
//!   attracting point of `f0 ∘ f1` and the coupling radius.
//! - [`field`]: probability fields `p0` (with `p1 = 1 - p0`), exact interval
//!   extrema and moduli of continuity.
//! - [`certificate`]: the constants making a power-tail class invariant.
//! - [`transfer`]: the grid (Ulam) discretization of the transition operator
//!   and its dual, power iteration.
//! - [`measure`]: distances and tail checks shared by grid and empirical
//!   measures.
//! - [`simulate`]: seeded trajectories, couplings, hitting and escape times.
//! - [`experiments`]: reproducible pass/fail procedures built on the above.
//!
//! ```
//! use amz_core::{ifs::SystemParams, field::ProbField};
//!
//! let params = SystemParams::new(0.75, 0.5)?;
//! let field = ProbField::constant(0.5)?;
//! let report = params.validate_assumptions(&field);
//! assert!(report.all_ok());
//! assert!((report.lambda0 - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-12);
//! # Ok::<(), amz_core::Error>(())
//! ```

// `!(a < b)` is used on purpose: it rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod error;
pub mod experiments;
pub mod field;
pub mod ifs;
pub mod measure;
pub mod simulate;
pub mod transfer;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/maps.md")]
    mod maps {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/certificate.md")]
    mod certificate {}
    #[doc = include_str!("../../../book/src/transfer.md")]
    mod transfer {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
