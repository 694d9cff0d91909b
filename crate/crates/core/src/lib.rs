//! Low-rank CP tensor completion with automatic l1 regularization.
//!
//! The completion driver alternates projected-gradient updates of the unit
//! factor columns with a solve for the scaling vector `alpha`. That solve is
//! an l1-regularized least-squares problem handled by iteratively reweighted
//! norms on top of a flexible Golub-Kahan hybrid method, with the Tikhonov
//! parameter chosen by weighted GCV at every Krylov step.
//!
//! A model-order-reduction pipeline for a parametrized diffusion problem and
//! binary file formats for tensors, masks and models round out the crate.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod completion;
pub mod cp;
pub mod error;
pub mod factor;
pub mod hybrid;
pub mod io;
pub mod mor;
pub mod tensor;

pub use cp::CpModel;
pub use error::{Error, Result};
pub use tensor::{khatri_rao, masked_copy, Dims, Mask, Mode, Tensor3};
