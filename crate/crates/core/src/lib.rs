pub mod arith;
pub mod error;
pub mod lattice;
pub mod base_field;
pub mod cm_field;
pub mod reciprocity;
pub mod orders;
pub mod counting;
pub mod bounds;
pub mod json;

pub use error::{Error, Result};
