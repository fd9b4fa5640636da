//! Forward function-based ISP: parameter types and the parametric stages.

mod forward;
mod params;

pub use forward::{
    apply_cc, apply_gamma, apply_inv_tone, apply_isp, apply_knee, monotone_margin,
    validate_gamma, MONOTONE_MARGIN, VALIDATION_GRID,
};
pub(crate) use forward::apply_matrix;
pub use params::{
    CcParams, GammaCurve, GammaParams, InvToneCurve, InvToneParams, IspParamSet, KneeCurve,
    KneeCurveParams, ParamRanges, PerChannel, Pipeline, Range, ToneCurve, MIN_CC_DET,
};
