#![no_std]
// negated comparisons reject NaN on purpose; index loops mirror the maths over fixed-size arrays
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod adapt;
pub mod analysis;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod math;
pub mod octree;
pub mod par;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod surface_mesh;
