//! Exact calculators and Monte-Carlo oracles for the sources of uncertainty
//! in supervised prediction.
//!
//! Each module pairs closed-form results with an independent sampling route
//! so every formula can be checked against simulation:
//!
//! * [`sim`]: seeded stream-splittable randomness and Monte-Carlo estimates.
//! * [`regression`]: OLS, generalized-inverse and ridge fits, prediction
//!   intervals, AIC and the bias-variance decomposition.
//! * [`kl_descent`]: expected Kullback-Leibler divergence of nested linear
//!   models as the parameter count passes the sample size.
//! * [`omitted`]: omitted-variable bias and variance mixing.
//! * [`errors_x`]: classical measurement error in the features.
//! * [`label_noise`]: error-prone class labels.
//! * [`missing`]: missing-data mechanisms and complete-case analysis.
//! * [`shift`]: train-versus-deployment transportability.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod errors_x;
pub mod kl_descent;
pub mod label_noise;
pub mod missing;
pub mod omitted;
pub mod regression;
pub mod shift;
pub mod sim;

pub use error::{Error, Result};
pub use sim::{McEstimate, RngStream};
