pub mod assets;
mod binio;
pub mod clusterer;
pub mod config;
pub mod corpus;
pub mod embedder;
pub mod error;
pub mod eval;
pub mod hybrid;
pub mod nn;
pub mod pipeline;
pub mod replynet;
pub mod stickers;
pub mod trainer;
pub mod trie;

pub use error::{Error, FormatError, Result};
