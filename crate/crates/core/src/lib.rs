//! Spectral bounds and block preconditioners for stochastic Galerkin
//! discretizations of `-∇·(a(x, ξ)∇u) = f` with affine coefficients
//! `a = a_0 + Σ_k a_k ξ_k`.
//!
//! The pipeline: recurrence coefficients and Gauss rules ([`orthopoly`]),
//! multi-index bases and the stochastic Galerkin matrices `G_k`
//! ([`stochastic_basis`]), finite element matrices `F_k` ([`fem`]), the
//! Kronecker-sum operator and its preconditioners ([`operator`]), closed-form
//! bounds ([`bounds`]) and Lanczos/PCG estimates ([`eigsolve`]).

pub mod bounds;
pub mod cli;
pub mod coeff_dsl;
pub mod config;
pub mod eigsolve;
pub mod error;
pub mod fem;
pub mod operator;
pub mod orthopoly;
pub mod report;
pub mod sparse;
pub mod stochastic_basis;

pub use error::{Error, Result};
