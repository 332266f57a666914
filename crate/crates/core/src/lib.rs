//! Scene-image features from user tags and pre-trained convolutional networks,
//! fused and classified with a kernel SVM.

pub mod classify;
pub mod content;
pub mod context;
pub mod embed;
pub mod error;
pub mod fusion;
pub mod linalg;
pub mod pipeline;
pub mod tags;

pub use error::{Error, Result};
