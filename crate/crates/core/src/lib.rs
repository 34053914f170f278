//! Nested hierarchical Dirichlet process mixtures over a covariate grid.

pub mod base_measure;
pub mod bvn;
pub mod cli;
pub mod combinatorics;
pub mod conditional;
pub mod config;
pub mod conjugate;
pub mod dist;
pub mod error;
pub mod hyper;
pub mod io;
pub mod marginal;
pub mod model;
pub mod moments;
pub mod run;
pub mod sampler;
pub mod selfcheck;
pub mod simulate;
pub mod summary;
pub mod trace;

pub use error::{Error, Result};
