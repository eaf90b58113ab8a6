//! Elastic spatiotemporal shape analysis of tree-like 4D objects.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub mod error;
pub mod esrvf;
pub mod metric;
pub mod spatreg;
pub mod stats;
pub mod synthgen;
pub mod trajectory;
pub mod treemodel;
pub mod warp;
pub use error::{Error, Result};
