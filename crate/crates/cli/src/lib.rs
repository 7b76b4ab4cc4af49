//! Companion crate to `splitq-core`: everything that touches the
//! operating system. CSV dataset ingestion, JSON configs and reports,
//! SVG plots, the seeded parallel simulation harness, exact
//! degrees-of-freedom tables, and the `splitq` command-line tool built
//! from those pieces.
//!
//! The library half is consumed by the binary and by integration tests;
//! all numerical work lives in `splitq-core`.

pub mod error;
pub mod io;
pub mod plot;
pub mod sim;
pub mod table;

pub use error::{CliError, Result};
