//! Minimal CPU convolutional network toolkit in `f64`.

mod adam;
mod blob;
pub mod gemm;
mod network;
pub mod ops;
mod tensor;

pub use adam::Adam;
pub use blob::{read_f64_blob, write_f64_blob, BlobError};
pub use network::{Init, LayerSpec, Network, Tape};
pub use ops::ConvShape;
pub use tensor::Tensor;
