use crate::error::Result;
use crate::imaging::PlanarImage;
use crate::isp::{apply_matrix, CcParams, KneeCurveParams};

/// Apply the inverse color matrix to every pixel.
pub fn invert_cc(img: &PlanarImage, p: &CcParams) -> Result<PlanarImage> {
    Ok(apply_matrix(img, &p.inverse_matrix()?))
}

/// Closed-form inverse of the knee curve, per channel.
pub fn invert_knee(img: &PlanarImage, p: &KneeCurveParams) -> PlanarImage {
    img.map_planes(|c, v| p.channel(c).eval_inverse(v as f64) as f32)
}
