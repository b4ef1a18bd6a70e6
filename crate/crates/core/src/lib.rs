//! Learning to swing up pendulums from pixels.
//!
//! The pipeline renders a simulated pendulum into small grayscale frames,
//! compresses them with PCA, learns a deep dynamical model (encoder,
//! decoder and latent predictor trained jointly) and closes the loop with a
//! receding-horizon controller that plans in the learned latent space.

pub mod analysis;
mod binio;
pub mod error;
pub mod harness;
pub mod ddm;
pub mod nmpc;
pub mod nncore;
pub mod render;
pub mod rlloop;
pub mod simworld;

pub use error::{Error, Result};
