//! Coherent excitation-energy-transfer dynamics of small excitonic systems
//! driven by laser pulses.
//!
//! The crate builds coherent modified Redfield (CMRT) rate tables for an
//! excitonic Hamiltonian coupled to harmonic baths, recasts them into a
//! generalized Lindblad generator, and propagates the density matrix either
//! deterministically ([`lindblad::oracle_propagate`]) or by the
//! non-Markovian quantum-jump unraveling ([`nmqj::run_ensemble`]).
//!
//! Units: energies in cm⁻¹, time in fs. Phases use
//! [`units::CM_TO_RAD_PER_FS`] throughout.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod cli;
pub mod config;
pub mod error;
pub mod lindblad;
pub mod model;
pub mod nmqj;
pub mod observables;
pub mod plan;
pub mod pulses;
pub mod rates;
pub mod units;

pub use error::{Error, Result};
