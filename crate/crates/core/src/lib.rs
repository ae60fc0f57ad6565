#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod benchfuncs;
pub mod data;
pub mod error;
pub mod heredity;
pub mod inference;
pub mod kernel;
pub mod model;
pub mod path;
pub mod selection;
pub mod solver;
pub mod sparse;

pub use error::{Error, ErrorKind, Result};
