use crate::error::{Error, Result};
use crate::imaging::PlanarImage;

use super::params::{
    CcParams, GammaParams, InvToneParams, IspParamSet, KneeCurveParams, PerChannel, Pipeline,
    ToneCurve,
};

/// Grid size used by [`validate_gamma`] when callers have no preference.
pub const VALIDATION_GRID: usize = 10001;

/// Minimum rise between neighboring grid samples for a curve to count as strictly increasing.
pub const MONOTONE_MARGIN: f64 = 1e-9;

/// Multiply every pixel vector by the color matrix. No clamping.
pub fn apply_cc(img: &PlanarImage, p: &CcParams) -> PlanarImage {
    apply_matrix(img, p.matrix())
}

pub(crate) fn apply_matrix(img: &PlanarImage, m: &[[f64; 3]; 3]) -> PlanarImage {
    let n = img.plane_len();
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let mut data = vec![0f32; n * 3];
    for i in 0..n {
        let v = [r[i] as f64, g[i] as f64, b[i] as f64];
        for c in 0..3 {
            data[c * n + i] = (m[c][0] * v[0] + m[c][1] * v[1] + m[c][2] * v[2]) as f32;
        }
    }
    PlanarImage::new(img.width(), img.height(), data).expect("shape preserved")
}

/// Gain / contrast knee curve, per channel. Values outside `[0,1]` follow the
/// outer linear segments.
pub fn apply_knee(img: &PlanarImage, p: &KneeCurveParams) -> PlanarImage {
    img.map_planes(|c, v| p.channel(c).eval(v as f64) as f32)
}

pub fn apply_gamma(img: &PlanarImage, p: &GammaParams) -> PlanarImage {
    apply_tone(img, p)
}

pub fn apply_inv_tone(img: &PlanarImage, p: &InvToneParams) -> PlanarImage {
    apply_tone(img, p)
}

fn apply_tone<C: ToneCurve>(img: &PlanarImage, p: &PerChannel<C>) -> PlanarImage {
    img.map_planes(|c, v| p.channel(c).eval(v as f64) as f32)
}

/// Forward ISP: `contrast ∘ gamma ∘ gain ∘ cc`, preceded by inverse tone mapping
/// for the ie pipeline.
pub fn apply_isp(img: &PlanarImage, p: &IspParamSet, pipeline: Pipeline) -> Result<PlanarImage> {
    let start = match pipeline {
        Pipeline::Isp => None,
        Pipeline::Ie => Some(apply_inv_tone(img, p.inv_tone.as_ref().ok_or(Error::MissingInvTone)?)),
    };
    let x = apply_cc(start.as_ref().unwrap_or(img), &p.cc);
    let x = apply_knee(&x, &p.gain);
    let x = apply_gamma(&x, &p.gamma);
    Ok(apply_knee(&x, &p.contrast))
}

/// True iff every channel's curve rises by at least [`MONOTONE_MARGIN`] between
/// each pair of neighbors on `grid` evenly spaced points in `[0,1]`.
pub fn validate_gamma<C: ToneCurve>(p: &PerChannel<C>, grid: usize) -> bool {
    p.iter().all(|c| monotone_margin(c, grid).is_some_and(|m| m >= MONOTONE_MARGIN))
}

/// Smallest rise between neighbors on the grid; `None` for grids under two points
/// or curves producing non-finite values.
pub fn monotone_margin<C: ToneCurve>(curve: &C, grid: usize) -> Option<f64> {
    if grid < 2 {
        return None;
    }
    let step = 1.0 / (grid - 1) as f64;
    let mut prev = curve.eval(0.0);
    let mut margin = f64::INFINITY;
    for i in 1..grid {
        let x = if i == grid - 1 { 1.0 } else { i as f64 * step };
        let y = curve.eval(x);
        if !y.is_finite() {
            return None;
        }
        margin = margin.min(y - prev);
        prev = y;
    }
    Some(margin)
}
