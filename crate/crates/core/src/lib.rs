//! Place recognition and re-localization over pre-extracted image features.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod database;
pub mod dataset;
pub mod reloc;
pub mod synth;
pub mod kernels;
pub mod matching;
pub mod vocabulary;

mod binio;

pub use error::{Error, Result};
