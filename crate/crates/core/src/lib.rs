pub mod analysis;
pub mod autodiff;
pub mod classifier;
pub mod data;
pub mod entailment;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod trainer;
pub mod trigger;

pub use error::{Error, FormatError, Result};
pub use geometry::{Curvature, LorentzPoint, TangentVector};
