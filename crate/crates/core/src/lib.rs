//! Keyed, gradient-energy guided pixel shuffling for visual privacy.
//!
//! The crate is organised as a pipeline:
//!
//! * [`image`]: 8-bit channel-major tensors, PNG I/O, region tiling and
//!   per-region standardization.
//! * [`vfe`]: visual feature entropy, the sum of squared adjacent-pixel
//!   differences inside regions.
//! * [`calibration`]: lower and upper window-size bounds, including the
//!   exhaustive base-case enumeration for the 2x2 conv + max-pool block.
//! * [`mixer`]: adaptive, keyed spatial and per-channel shuffling, plan
//!   recording, inversion and dataset batch mode.
//! * [`optim`]: the bias-correction-free adaptive moment optimizer, a
//!   reference Adam, and a synthetic oscillating-gradient benchmark.
//! * [`attack`]: search-space accounting and a keyless min-energy
//!   reassembly attack.

pub mod attack;
pub mod calibration;
pub mod config;
pub mod error;
pub mod image;
pub mod mixer;
pub mod optim;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod vfe;

pub use error::{Error, Result};
pub use image::{ImageTensor, Region, RegionStats};
