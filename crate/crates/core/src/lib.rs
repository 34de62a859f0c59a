pub mod augment;
pub mod corpus;
pub mod coverage;
pub mod digest;
pub mod error;
pub mod mlm;
pub mod synth;
pub mod tagger;
pub mod translit;
pub mod wordpiece;

pub use error::{Error, Result};
