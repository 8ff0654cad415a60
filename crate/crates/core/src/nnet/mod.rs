//! From-scratch network engine: tensors, the layer kinds the classifier
//! needs (hand-derived backward passes), the two-headed model and its
//! checkpoint format.

pub mod attention;
pub mod checkpoint;
pub mod conv;
pub mod dropout;
pub mod gradcheck;
pub mod init;
pub mod lstm;
pub mod model;
pub mod tensor;

pub use attention::MultiHeadAttention;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use conv::{conv_output_len, Conv1d, Dense};
pub use dropout::dropout;
pub use lstm::Lstm;
pub use model::{count_parameters, ConvSpec, Model, ModelConfig, Variant};
pub use tensor::{argmax, Real, Tensor};
