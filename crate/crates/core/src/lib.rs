//! Desk-scale numerical laboratory for the correspondence between the grand
//! canonical ensemble of a truncated Bose gas and the Gibbs measure of the
//! cubic nonlinear Schrödinger equation on the one-dimensional torus.
//!
//! The crate samples the classical Gibbs state by importance sampling,
//! integrates the (local and nonlocal) NLS flow with a mass-exact splitting
//! scheme, realizes the truncated bosonic Fock space with all lifted
//! operators and grand canonical states, builds Schwinger-Dyson expansion
//! coefficients shared between the quantum and classical sides, and measures
//! time-dependent correlation functions on both sides so their large-tau
//! agreement can be verified against closed forms and Monte Carlo references.

pub mod classical;
pub mod correlate;
pub mod dyson;
pub mod error;
pub mod flow;
pub mod fock;
pub mod linalg;
pub mod observable;
pub mod potential;
pub mod rng;
pub mod spectral;
pub mod xsb;

pub use error::{Error, Result};
