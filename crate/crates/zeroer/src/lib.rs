//! Unsupervised entity resolution with zero labeled examples.
//!
//! The engine classifies tuple pairs from two tables as match / unmatch by
//! fitting a two-component Gaussian generative model over string-similarity
//! feature vectors. Three ER-specific constraints make the vanilla mixture
//! work on heavily imbalanced pair sets:
//!
//! * per-attribute feature grouping with a single correlation matrix shared
//!   between the match and unmatch components,
//! * adaptive variance regularization that raises every feature's
//!   distribution overlap (Bhattacharyya coefficient) by the same amount,
//! * probabilistic transitivity constraints enforced on the posteriors
//!   inside the EM loop via projection on the feasibility boundary.
//!
//! The crate is organized along the pipeline stages: [`ingest`] loads and
//! aligns the input tables, [`blocking`] builds candidate pair sets,
//! [`features`] turns pairs into grouped similarity vectors, [`model`] fits
//! the generative model, [`transitivity`] couples the cross- and
//! within-table models through the transitivity constraints, [`eval`]
//! scores predictions, [`synth`] generates seeded synthetic data for
//! testing, and [`pipeline`] ties everything behind one config.

pub mod blocking;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod transitivity;

pub use error::{Error, Result};
