//! Computational laboratory for the geometric Lorenz attractor: the hybrid
//! flow, its first-return map, the partially hyperbolic splitting, invariant
//! manifolds with the stable-holonomy chart, and executable tests of the weak
//! specification property with failure certificates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow;
pub mod hyperbolicity;
pub mod manifolds;
pub mod return_map;
pub mod specification;

pub use error::{Error, Result};
pub use flow::{CrossSectionPoint, GeometricLorenzParams, Region, Side, State3, Trajectory};
pub use return_map::{PeriodicPoint, ReturnMapParams};
