//! Corpus-guided configuration synthesis for Csmith-compatible C program
//! generators.
//!
//! The pipeline has three file-connected stages:
//!
//! 1. [`features`]: count generator-controllable language features in a seed
//!    corpus of C programs and min-max normalize the counts.
//! 2. [`clustering`]: group the normalized vectors with X-Means and keep the
//!    centroids and cluster sizes.
//! 3. [`planner`] + [`harness`]: turn each centroid coordinate into the
//!    inclusion probability of a feature, generate programs under those
//!    configurations, compile them at two optimization levels and compare the
//!    executables. [`reporting`] tallies the outcomes.
//!
//! [`campaign`] glues the stages into a resumable on-disk campaign and
//! [`mock`] provides a deterministic generator/compiler pair for testing the
//! pipeline without a real toolchain.

pub mod campaign;
pub mod clustering;
mod error;
pub mod features;
pub mod harness;
pub mod mock;
pub mod planner;
pub mod reporting;
pub mod rng;

pub use error::{Error, Result};
