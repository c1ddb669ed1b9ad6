#![cfg_attr(not(feature = "std"), no_std)]

//! Core numerics for a chain of three rotors coupled to two Langevin heat
//! baths at its ends.
//!
//! The crate is `no_std` (with `alloc`) and carries no IO. It contains:
//!
//! - [`phasepoly`]: exact algebra on finite sums of
//!   `p1^n1 p2^l p3^n3 e^{i k.q}` with complex rational coefficients,
//!   including the q2-average and the inverse of the fast transport
//!   `p2 d/dq2`.
//! - [`model`]: potentials, parameters, Hamiltonian, forces and the
//!   generator applied to symbolic functions.
//! - [`averaging`]: Ito bookkeeping and the order-by-order elimination of
//!   oscillating terms that yields the slow dynamics of the middle rotor.
//! - [`sde`]: single steps of the Euler-Maruyama and OU/leapfrog splitting
//!   schemes, reproducible noise streams and trajectory drivers.
//! - [`observables`]: histograms, KS statistics, flux estimators, mode and
//!   regime detection.
//! - [`lyapunov`]: the Lyapunov candidate, its generator, region labels and
//!   the sampled drift certificate.
//! - [`control`]: force bounds, piecewise-constant middle-rotor plans and
//!   outer-rotor trajectory synthesis.

extern crate alloc;

pub mod averaging;
pub mod control;
mod fmath;
pub mod lyapunov;
pub mod model;
pub mod observables;
pub mod phasepoly;
pub mod sde;

pub use averaging::{EffectiveDynamics, ItoForm};
pub use model::{ChainParams, Model, State, TrigPotential};
pub use phasepoly::{Coeff, Monomial, PhasePoly, Rational, Var};
