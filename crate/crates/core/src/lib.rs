//! Numerical machinery for the dimension theory of piecewise-expanding interval
//! maps whose fixed points may be parabolic (the Manneville–Pomeau family being
//! the motivating example).
//!
//! The crate is `no_std` and only needs an allocator. Everything that touches
//! files, threads or the command line lives in the `dimlab` companion crate.
//!
//! Layout:
//!
//! * [`map`] models the map, its inverse branches and fixed points.
//! * [`symbolic`] enumerates cylinders and evaluates Birkhoff sums on them.
//! * [`measures`] holds parameterized invariant measures and the moment metric.
//! * [`pressure`] selects good cylinders, sums pressures and finds Bowen roots.
//! * [`moran`] builds block schedules and Moran constructions.
//! * [`estimators`] has box counting, generic-point traces and ball coverings.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimators;
pub mod exec;
pub mod map;
pub mod math;
pub mod measures;
pub mod moran;
pub mod pressure;
pub mod symbolic;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use map::{BranchKind, BranchSpec, FixedPoint, IntervalMap};
pub use symbolic::{Cylinder, Word};
pub use measures::{MeasureSpec, MomentFamily, Moments};


