pub mod align;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod preprocess;
pub mod pretrain;
pub mod suggest;
pub mod synth;
pub mod text_encoder;
pub mod train;
pub mod video;

pub use error::{Error, Result};
