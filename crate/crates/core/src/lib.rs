//! Latent-conditioned physics-informed traveltime solving.
//!
//! The crate implements a two-stage workflow for the factored eikonal
//! equation |∇T|² = 1/V²: a KL-regularized convolutional autoencoder learns a
//! compressed latent code for velocity fields, then a single MLP conditioned
//! on that code is trained against the PDE residual over many velocities so
//! that unseen velocities from the same distribution are solved by forward
//! evaluation alone. A fast-marching solver provides the numerical reference,
//! a Gaussian-random-field generator provides the data, and a latent DDPM
//! samples new velocity fields from the learned latent space.

pub mod error;
pub mod tensorio;

pub use error::{Error, Result};
