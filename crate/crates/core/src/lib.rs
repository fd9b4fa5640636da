//! Invertible function-based ISP and one-to-many sRGB-to-RAW pseudo-data
//! generation for semi-supervised ISP and image-enhancement training.
//!
//! * [`imaging`]: planar float images, PNG and float-container I/O, resizing.
//! * [`isp`]: the forward ISP (color correction, gain, gamma, contrast, and
//!   inverse tone mapping for enhancement).
//! * [`inverse`]: exact inverses and the 4-D lookup-table inverse of the tone
//!   curves.
//! * [`bank`]: the saved parameter-set bank and its sampling modes.
//! * [`pseudo`]: sRGB-to-RAW, sRGB quality update, noise synthesis and the
//!   dataset driver.
//! * [`filter`]: loss-based online pseudo-data filtering and the losses it is
//!   used with.

pub mod bank;
pub mod error;
pub mod filter;
pub mod imaging;
pub mod inverse;
pub mod isp;
pub mod pseudo;
pub mod rng;

pub use error::{Error, Result};
pub use imaging::{ColorRole, ImageMeta, PlanarImage};
pub use isp::{IspParamSet, ParamRanges, Pipeline};
