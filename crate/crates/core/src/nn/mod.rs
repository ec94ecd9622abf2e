//! Reverse-mode differentiation on dense matrices and the two decoders built
//! on it.

pub mod checkpoint;
pub mod encoding;
pub mod matrix;
pub mod model;
pub mod params;
pub mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use encoding::{encoded_len, positional_encode};
pub use matrix::Matrix;
pub use model::{Bound, DecoderConfig, Model, ParamCounts, ParamGroup};
pub use params::{Gradients, ParamId, Parameter, ParameterStore};
pub use tape::{NodeId, Tape};
