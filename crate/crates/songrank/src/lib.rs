//! Stochastic optimization of NDCG and top-K NDCG surrogates for listwise
//! learning to rank.
//!
//! The crate trains a scoring model (linear or small MLP) against smooth
//! compositional surrogates of NDCG and its top-K variant, using moving-average
//! estimators for the inner rank quantities, and ships a verification suite
//! that checks every derivative and bound at desk scale against independent
//! oracles.

pub mod cli;
pub mod data;
mod error;
pub mod optim;
pub mod scorer;
pub mod surrogate;
pub mod topk;
pub mod verify;

pub use error::{Error, Result};
