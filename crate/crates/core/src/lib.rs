// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod autodiff;
pub mod basis;
pub mod encoding;
pub mod error;
pub mod network;
pub mod ntk;
pub mod sparse;
pub mod tasks;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
