//! Training dynamics, observables, and loss-landscape analysis for a
//! single-neuron weight-tied autoencoder `f(x; w) = w * phi(<w, x>)` trained
//! on an orthonormal dataset.
//!
//! The crate is organized around four modules:
//!
//! * [`basis_data`] — orthonormal datasets, basis changes, Gaussian inits,
//! * [`dynamics`] — the forward map, gradients, batch schedulers, and the
//!   training loop (full-batch GD, uniform mini-batch SGD, cyclic SGD),
//! * [`observables`] — the in-span/out-of-span masses `(Phi, Psi)`, the
//!   log-ratio alignment process `R`, limit classification, and the
//!   random-walk increment statistics,
//! * [`landscape`] — the global-minimum set of the ReLU objective, one-sided
//!   directional derivatives, and max/trace curvature reports.
//!
//! All numeric code is generic over the [`Scalar`] floating-point type;
//! `f64` aliases for the main types are exported at the crate root.
//! Datapoint indices in Rust APIs are 0-based throughout; serialized
//! artifacts (CSV columns, manifest labels) use 1-based datapoint numbering.

// Validation guards use `!(x > 0)` so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::manual_is_multiple_of)]

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

pub mod basis_data;
pub mod dynamics;
pub mod error;
pub mod landscape;
mod linalg;
pub mod observables;
pub mod rng;

pub use error::{Error, Result};

/// Floating-point scalar the numeric core is generic over (f32 or f64).
pub trait Scalar: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {}

/// Converts an f64 literal into the working scalar type.
#[inline]
pub(crate) fn real<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("literal representable in scalar type")
}

pub type OrthoDataset64 = basis_data::OrthoDataset<f64>;
pub type NeuronState64 = basis_data::NeuronState<f64>;
pub type TrainConfig64 = dynamics::TrainConfig<f64>;
pub type TrajectoryRecord64 = dynamics::TrajectoryRecord<f64>;
pub type TrainOutcome64 = dynamics::TrainOutcome<f64>;
pub type IncrementStats64 = observables::IncrementStats<f64>;
pub type SharpnessReport64 = landscape::SharpnessReport<f64>;
