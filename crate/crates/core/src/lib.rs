pub mod beamfem;
pub mod discovery;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod material;
pub mod preprocess;
pub mod sparse;
pub mod synth;
pub mod weakform;

pub use error::{Error, Result};
pub use grid::FieldGrid;
