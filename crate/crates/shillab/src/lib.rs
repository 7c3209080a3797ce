//! A self-contained shilling-attack laboratory.
//!
//! The crate trains a latent diffusion attacker (a profile autoencoder, a
//! parameter-free graph encoder over the attacker's view, and a
//! target-conditioned noise approximator), alongside heuristic attack
//! baselines and victim recommenders (MF-BPR, LightGCN, NCF), and runs the
//! full injection / retraining / evaluation protocol with top-K attack
//! metrics, unsupervised detection, and PCA exports.

pub mod ae;
pub mod baselines;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod num;
pub mod victims;

pub use error::{Error, Result};
