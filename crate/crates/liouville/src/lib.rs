//! Lattice simulation of the dynamical Liouville equation on `R x T^2`:
//! white noise and mollification, the heat flow and the linear solution,
//! Wick-ordered GMC, parabolic Besov statistics, the two solvers, puncture
//! weights, persistence and the command line.

pub mod besov;
pub mod cli;
pub mod config;
pub mod conv;
pub mod gmc;
pub mod heat;
pub mod io;
pub mod noise;
pub mod punctures;
pub mod solver;
pub mod spectral;

pub use liouville_core as core;
pub use liouville_core::{Error, Field, Result, SpaceTimePoint, TorusGrid};
