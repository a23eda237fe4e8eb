//! Moment-based analysis and feedback control of parameterized ODE ensembles.
//!
//! An *ensemble* is a family of control-affine systems
//! `dx/dt = f(x, beta) + sum_i u_i(t) g_i(x, beta)` indexed by a parameter
//! `beta` ranging over a box, all driven by one shared, parameter-independent
//! input `u(t)`. This crate works with such ensembles through their moment
//! sequences `m_k(t) = integral of beta^k x(t, beta) d beta`:
//!
//! * [`multiindex`] / [`grid`] — multi-index bookkeeping, exact binomial
//!   coefficients, and quadrature grids (midpoint and Gauss-Legendre);
//! * [`moments`] — ensemble and output moments, Hausdorff difference
//!   operators and solvability checks, interval rescaling, the radical
//!   metric on output moments;
//! * [`inversion`] — Bernstein-type reconstruction of a density from its
//!   moments, with an exact rational kernel;
//! * [`ensemble`] — RK4 time integration of ensembles discretized over a
//!   grid, plus `L^p` profile distances;
//! * [`moment_dynamics`] — the closed Bloch moment chain and generic
//!   pushforward moment dynamics, with co-simulation of ensemble and
//!   moment system;
//! * [`controller`] — quadratic Lyapunov functions over truncated moment
//!   errors and the associated moment-feedback laws;
//! * [`scenarios`] — canned simulation presets and their CSV reports.

pub mod controller;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod moment_dynamics;
pub mod moments;
pub mod multiindex;
pub mod numeric;
pub mod scenarios;
pub mod systems;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
