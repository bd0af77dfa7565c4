//! Electron transmission, Bloch phase, phase time and dwell time of finite
//! one-dimensional semiconductor superlattices.

pub mod arc;
pub mod error;
pub mod kard;
pub mod medium;
pub mod numeric;
pub mod playmodel;
pub mod resonance;
pub mod scattering;
pub mod tdse;
pub mod timing;
pub mod tmatrix;

pub use error::{Error, Result};
