//! Measurement-error toolkit for platform-derived occupational AI-exposure scores.

pub mod cli;
pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod estim;
pub mod exposure;
pub mod ident;
pub mod ingest;
pub mod manifest;
pub mod occ;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod selection;
pub mod stats;

pub use error::{Error, Result};
pub use occ::{Level, OccId};
