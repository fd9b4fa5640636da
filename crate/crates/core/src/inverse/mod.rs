//! Inverse ISP: closed-form inverses for the linear and piecewise-linear stages
//! and lookup-table inverses for the two power-law tone curves.

mod exact;
mod lut;
mod sweep;

use std::path::Path;

pub use exact::{invert_cc, invert_knee};
pub use lut::{
    apply_inverse_lut, apply_inverse_lut_with_stats, build_inverse_lut, linspace, BuildReport,
    InverseLut4D, LookupStats, LutDims, LutInvertible, LutStage, LUT_MAGIC,
};
pub use sweep::{sweep_round_trip, SweepReport};

use crate::error::{Error, Result};
use crate::imaging::PlanarImage;
use crate::isp::{IspParamSet, ParamRanges, Pipeline};

/// The lookup tables an inverse pipeline needs.
#[derive(Debug, Clone)]
pub struct LutSet {
    pub gamma: InverseLut4D,
    pub inv_tone: Option<InverseLut4D>,
}

impl LutSet {
    /// Load or build (and cache) every table `pipeline` requires.
    pub fn load_or_build(
        cache_dir: impl AsRef<Path>,
        pipeline: Pipeline,
        ranges: &ParamRanges,
        dims: LutDims,
    ) -> Result<Self> {
        let dir = cache_dir.as_ref();
        let gamma = InverseLut4D::load_or_build(dir, LutStage::Gamma, ranges, dims)?;
        let inv_tone = match pipeline {
            Pipeline::Isp => None,
            Pipeline::Ie => Some(InverseLut4D::load_or_build(dir, LutStage::InvTone, ranges, dims)?),
        };
        Ok(Self { gamma, inv_tone })
    }

    /// Build in memory without touching the filesystem.
    pub fn build(pipeline: Pipeline, ranges: &ParamRanges, dims: LutDims) -> Result<Self> {
        let gamma = build_inverse_lut(LutStage::Gamma, ranges, dims, false)?.0;
        let inv_tone = match pipeline {
            Pipeline::Isp => None,
            Pipeline::Ie => Some(build_inverse_lut(LutStage::InvTone, ranges, dims, false)?.0),
        };
        Ok(Self { gamma, inv_tone })
    }
}

/// Inverse ISP: `cc⁻¹ ∘ gain⁻¹ ∘ gamma⁻¹ ∘ contrast⁻¹`, followed by the
/// inverse-tone inverse for the ie pipeline.
pub fn invert_isp(
    img: &PlanarImage,
    p: &IspParamSet,
    luts: &LutSet,
    pipeline: Pipeline,
) -> Result<PlanarImage> {
    let x = invert_knee(img, &p.contrast);
    let x = apply_inverse_lut(&x, &p.gamma, &luts.gamma)?;
    let x = invert_knee(&x, &p.gain);
    let x = invert_cc(&x, &p.cc)?;
    match pipeline {
        Pipeline::Isp => Ok(x),
        Pipeline::Ie => {
            let it = p.inv_tone.as_ref().ok_or(Error::MissingInvTone)?;
            let lut = luts
                .inv_tone
                .as_ref()
                .ok_or(Error::MissingLut(LutStage::InvTone))?;
            apply_inverse_lut(&x, it, lut)
        }
    }
}
