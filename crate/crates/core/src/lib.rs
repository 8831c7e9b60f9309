pub mod aspp;
pub mod density;
pub mod eval;
pub mod error;
pub mod geom;
pub mod glo;
pub mod ingest;
pub mod pipeline;
pub mod rng;
pub mod simfix;
pub mod synthgen;

pub use density::DensitySampleSet;
pub use error::{Error, Result};
pub use geom::*;
