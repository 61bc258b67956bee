//! Probabilistic decision support over networks of emulators and time-series models.
//!
//! Component processes are modelled either by Gaussian-process emulators of
//! deterministic simulators ([`gp`]) or by dynamic linear models of observed
//! series ([`dlm`]). [`network`] wires them into a feed-forward graph and
//! propagates first and second moments through it in closed form, so a
//! downstream quantity gets a predictive mean and variance that account for
//! every upstream uncertainty. [`pipeline`] assembles the energy-planning case
//! study on top (data ingestion, scenarios, persistence).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dlm;
pub mod error;
pub mod gp;
mod linalg;
pub mod moments;
pub mod network;
mod optim;
pub mod pipeline;
pub mod simulators;

pub use error::{Error, Result};
pub use linalg::min_eigenvalue;
pub use moments::GaussianMoments;
