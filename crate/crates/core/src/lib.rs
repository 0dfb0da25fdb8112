//! Weak solutions of `dX = b(t, X) dt + dB^{H1} + dB^{H2}` driven by two
//! fractional Brownian motions built from one Wiener process.
//!
//! The crate is `no_std` (with `alloc`); enable the `std` feature for
//! `std::error::Error` on [`Error`].

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod drift;
pub mod error;
pub mod frac_ops;
pub mod girsanov;
pub mod grid;
pub mod kernels;
pub mod noise;
pub mod rng;
pub mod special;

pub use error::{Checked, Error, Result, Warning};
pub use frac_ops::{
    apply_chain, power_rule_value, power_weight, riemann_liouville_derivative, riemann_liouville_integral, Atom,
    OperatorChain,
};
pub use grid::{Grid, GridFunction, PowerTerm};
