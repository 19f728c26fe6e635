// `!(x > 0.0)` is used on purpose so NaN is rejected; index loops mirror the
// two-class, two-server notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod linalg;
pub mod lp;
pub mod params;
pub mod wcp;
pub mod rng;
pub mod diffusion;
pub mod queue;
pub mod experiments;

pub use error::{Error, Result};
pub use params::{Mat2, SystemParams};
