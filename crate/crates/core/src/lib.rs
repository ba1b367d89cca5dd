pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval_service;
pub mod generation;
pub mod llm_gateway;
pub mod prompting;
pub mod quality_model;
mod util;

pub use error::{Error, Result};
