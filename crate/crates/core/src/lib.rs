//! Reconstruction of compressive light-sheet volumes.
//!
//! A volume of `N·R` slices is acquired as `N` camera shots, each the sum
//! of `R` consecutive slices multiplied by binary DMD masks. The crate
//! recovers the volume with plug-and-play ADMM: an exact per-pixel solve
//! for the data term alternates with an off-the-shelf denoiser (Tikhonov,
//! total variation or a BM3D-style filter), optionally coupled to its axial
//! neighbours by a smoothness penalty.

pub mod admm;
pub mod denoise;
pub mod error;
pub mod forward;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod rng;
pub mod tuner;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{MaskSet, MeasurementSet, Slice, Volume};
