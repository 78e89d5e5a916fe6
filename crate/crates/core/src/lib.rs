//! Numerical substrate for the dynamical Liouville equation on the space-time
//! torus `R x T^2`: parabolic geometry, lattice fields, mollifiers, the closed
//! form phase diagram, puncture formulas, sphere kernels and Monte Carlo rigs.
//!
//! The crate is `no_std` and only needs `alloc`. Anything that wants an FFT,
//! threads or a file system lives in the companion `liouville` crate.
#![no_std]
// `Float` supplies libm-backed float methods on toolchains without them in core
#![allow(unused_imports)]

extern crate alloc;

pub mod error;
pub mod geometry;
pub mod integral;
pub mod kahane;
pub mod mollifier;
pub mod punctures;
pub mod quad;
pub mod rng;
pub mod sphere;
pub mod spectrum;
pub mod stats;
pub mod thresholds;

pub use error::{Error, Result};
pub use geometry::{Field, ParabolicBall, SpaceTimePoint, TorusGrid};
