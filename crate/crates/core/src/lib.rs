//! Quadratic-form mean-vector inference for homoscedastic split-plot
//! (repeated-measures) designs.
//!
//! The data model is `a` independent groups of subjects, where group `i`
//! contributes `n_i` independent observation vectors of dimension `d` (one
//! measurement per time point), all sharing one positive-definite covariance
//! matrix. Null hypotheses about the group-by-time mean structure are encoded
//! as Kronecker products `T = T_W ⊗ T_S` of a whole-plot (group) projection
//! and a sub-plot (time) projection, and tested through the quadratic form
//! `Q_N = N · x̄ᵀ T x̄` of the pooled group-mean vector.
//!
//! The crate provides:
//!
//! * [`design`] — designs, datasets, hypothesis matrices, and the
//!   grand-mean/group/time/interaction effect decomposition;
//! * [`kron`] — Kronecker-structured linear algebra: covariance models,
//!   trace powers, the whole-plot imbalance factor `η`, spectra of
//!   `T V_N T`, and the exact degrees-of-freedom functional `f_P`;
//! * [`estimators`] — unbiased U-statistic estimators `A₁`, `A₂`, `C₁` of
//!   the first three trace powers of `T_S Σ`, plus the subsampled `C₁*`;
//! * [`engine`] — the standardized statistics `W̃_N` / `W_N`, the
//!   standardized-chi-square critical-value machinery `K_f`, p-values, and
//!   the full test pipeline;
//! * [`limit`] — the weighted-chi-square limit laws: spectrum
//!   classification, mixture sampling, and approximation-error tables;
//! * [`prob`] — the underlying special functions (log-gamma, regularized
//!   incomplete gamma, chi-square and normal quantiles);
//! * [`rng`] — a counter-based splittable random number generator so that
//!   every simulation is reproducible independently of thread count.
//!
//! Everything here is `no_std` (with `alloc`); IO, file formats, the
//! command-line surface, and the parallel Monte Carlo harness live in the
//! companion `splitq` crate.
//!
//! # Example
//!
//! ```
//! use splitq_core::design::{DataSet, Design, HypothesisSpec};
//! use splitq_core::engine::{run_test, TestOptions};
//! use nalgebra::DMatrix;
//!
//! // Two groups of 8 subjects, 4 time points, synthetic data.
//! let design = Design::new(vec![8, 8], 4).unwrap();
//! let groups: Vec<DMatrix<f64>> = (0..2)
//!     .map(|g| {
//!         DMatrix::from_fn(8, 4, |r, c| ((g + 7 * r + 3 * c) % 5) as f64 * 0.25)
//!     })
//!     .collect();
//! let data = DataSet::new(design, groups).unwrap();
//! let result = run_test(
//!     &data,
//!     &HypothesisSpec::Interaction,
//!     &TestOptions { alpha: 0.05, upsilon: 0.05, seed: 7 },
//! )
//! .unwrap();
//! assert!(result.p_value >= 0.0 && result.p_value <= 1.0);
//! ```

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod design;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod kron;
pub mod limit;
pub mod prob;
pub mod rng;

pub use error::{Error, Result};
