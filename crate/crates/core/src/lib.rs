pub mod baselines;
pub mod bench;
pub mod bnb;
pub mod correlation;
pub mod error;
pub mod geometry;
pub mod pipeline;
pub mod result;
pub mod simroom;
pub mod wav;
#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use geometry::{GeometryConfig, LocusClass, MicArray, Point, TdeVector};
pub use result::{LocalizationResult, Method};
