//! Numerical substrate: dense matrices, MLPs with reverse-mode gradients,
//! Adam, orthogonal initialisation and PCA.

pub mod adam;
pub mod init;
pub mod matrix;
pub mod mlp;
pub mod pca;
pub mod segment;

pub use adam::{AdamConfig, AdamState};
pub use init::orthogonal_init;
pub use matrix::{gemm, Matrix, Trans};
pub use mlp::{Activation, LinearLayer, Mlp, Tape};
pub use pca::{PcaMethod, PcaProjector};

/// A flat, ordered view of trainable tensors.
///
/// The order of `tensors` and `tensors_mut` must agree; optimiser state is
/// matched up by position.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
    /// Human-readable name of tensor `index`, used in diagnostics.
    fn tensor_name(&self, index: usize) -> String;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}
