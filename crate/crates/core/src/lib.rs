pub mod archive;
pub mod backbone;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod lane_prob;
pub mod model;
pub mod nn;
pub mod output;
pub mod scene;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
