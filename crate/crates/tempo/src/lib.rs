//! Numerically exact dynamics of a small quantum system coupled to several
//! structured bosonic environments, via time-evolving matrix product
//! operators, together with semi-analytic reference solvers.

extern crate blas_src;

pub mod scalar;
pub mod baths;
pub mod config;
pub mod runner;
pub mod process_tensor;
pub mod propagation;
pub mod quad;
pub mod reference;
pub mod system;
pub mod tensors;

pub use scalar::Scalar;
pub use tensors::DenseTensor;

/// Double-precision tensor, the default working type.
pub type Tensor64 = DenseTensor<f64>;
/// Single-precision tensor.
pub type Tensor32 = DenseTensor<f32>;
