//! Optimal rigid-motion-invariant approximation of image datasets.
//!
//! Given `d x d` images with `d = p q` (both odd), [`solver::fit`] computes
//! `κ` generators whose translates on a `q`-spaced lattice and quarter-turn
//! rotates form a Parseval frame of the invariant subspace that best
//! approximates the dataset in the least-squares sense.

pub mod cli;
pub mod dataset_io;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod projector;
pub mod solver;
pub mod transform;

pub use error::{Error, Result};
