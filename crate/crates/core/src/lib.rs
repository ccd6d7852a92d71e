//! Numerical laboratory for conformal soliton blow-up in the one-dimensional
//! quintic nonlinear Schrödinger equation
//!
//!     i u_t + u_xx + |u|^4 u = 0.
//!
//! The crate computes the explicit objects of the construction — the ground
//! state Q, the linearized profile pairs, the universal constants kappa and
//! alpha_1..alpha_5, the approximate blow-up ansatz V[Gamma] and its residual
//! — and runs the blow-up experiment end to end: split-step integration,
//! modulation decomposition, conformal-rate tracking and the residual-profile
//! comparison against |x| + i kappa x^2.

pub mod ansatz;
pub mod bump;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod groundstate;
pub mod ivp;
pub mod modulation;
pub mod profiles;

pub use error::{Error, Result};
