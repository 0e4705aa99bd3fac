//! Binary classification on tabular data with a feature-tokenizer
//! transformer.
//!
//! Every column becomes a token, a learned classification token is added,
//! and a stack of pre-norm attention blocks feeds a sigmoid head. Logistic
//! regression and an MLP share the same training and evaluation path as
//! baselines. Gradients come from the small reverse-mode engine in
//! [`tensor`].

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod importance;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
