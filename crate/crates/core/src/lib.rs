//! Schema-constrained synthesis of nested JSON records.

pub mod checkpoint;
pub mod constraints;
pub mod fixtures;
pub mod grammar;
pub mod model;
pub mod path;
pub mod sampler;
pub mod schema;
pub mod tokenizer;
pub mod train;
pub mod value;
