//! Control of non-stationary Markov decision processes through quickest
//! change detection.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: tabular MDPs, discounted dynamic programming, stationary
//!   distributions and Kullback-Leibler information numbers.
//! - [`detectors`]: Shiryaev, Shiryaev-Roberts, windowed CUSUM and GLR
//!   statistics over state-action-state transitions.
//! - [`controller`]: runtime switching controllers (Oracle, locally optimal,
//!   KL-probing, two-threshold, random) and the GLR reset for multiple
//!   change points.
//! - [`momdp`]: the two-regime POMDP construction and a belief-grid solver.
//! - [`inventory`]: the inventory-control environment with Poisson and
//!   Uniform demand regimes.
//! - [`harness`]: Monte Carlo evaluation, threshold optimisation,
//!   constrained calibration and CSV reports.
//! - [`config`]: the experiment manifest consumed by the CLI.

pub mod config;
pub mod controller;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod inventory;
pub mod mdp;
pub mod momdp;

pub use error::{Error, Result};
