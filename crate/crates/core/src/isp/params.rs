//! Parameter types for the function-based ISP and their domain ranges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted `|det|` of a color-correction matrix.
pub const MIN_CC_DET: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    /// RAW to sRGB: color correction, gain, gamma, contrast.
    Isp,
    /// Image enhancement: the ISP chain preceded by inverse tone mapping.
    Ie,
}

impl Pipeline {
    /// Length of a flat parameter vector for this pipeline.
    pub fn vector_len(self) -> usize {
        match self {
            Pipeline::Isp => 9 + 3 * 9,
            Pipeline::Ie => 9 + 4 * 9,
        }
    }
}

/// 3×3 color-correction matrix, row-major (`p_rr, p_rg, p_rb, p_gr, ...`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcParams {
    m: [[f64; 3]; 3],
}

impl CcParams {
    pub const IDENTITY: CcParams = CcParams {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("color matrix has non-finite entries".into()));
        }
        let p = Self { m };
        let det = p.determinant();
        if det.abs() <= MIN_CC_DET {
            return Err(Error::SingularMatrix(det));
        }
        Ok(p)
    }

    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::LengthMismatch {
                expected: 9,
                found: v.len(),
            });
        }
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Closed-form inverse via the adjugate.
    pub fn inverse_matrix(&self) -> Result<[[f64; 3]; 3]> {
        let m = &self.m;
        let det = self.determinant();
        if det.abs() <= MIN_CC_DET {
            return Err(Error::SingularMatrix(det));
        }
        let inv_det = 1.0 / det;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        Ok([
            [
                cof(1, 2, 1, 2) * inv_det,
                -cof(0, 2, 1, 2) * inv_det,
                cof(0, 1, 1, 2) * inv_det,
            ],
            [
                -cof(1, 2, 0, 2) * inv_det,
                cof(0, 2, 0, 2) * inv_det,
                -cof(0, 1, 0, 2) * inv_det,
            ],
            [
                cof(1, 2, 0, 1) * inv_det,
                -cof(0, 2, 0, 1) * inv_det,
                cof(0, 1, 0, 1) * inv_det,
            ],
        ])
    }
}

/// One channel of the three-segment piecewise-linear gain / contrast curve.
///
/// The knee segment spans `[p_x(1-p_w), p_x(1-p_w) + p_w]` on the input axis and
/// has height `p_h`; the outer segments share slope `(1-p_h)/(1-p_w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KneeCurve {
    pub px: f64,
    pub pw: f64,
    pub ph: f64,
}

impl KneeCurve {
    pub const IDENTITY: KneeCurve = KneeCurve {
        px: 0.5,
        pw: 0.5,
        ph: 0.5,
    };

    pub fn new(px: f64, pw: f64, ph: f64) -> Result<Self> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !(0.0..=1.0).contains(&px) || !open(pw) || !open(ph) {
            return Err(Error::InvalidParams(format!(
                "knee needs p_x in [0,1] and p_w, p_h in (0,1); got ({px}, {pw}, {ph})"
            )));
        }
        Ok(Self { px, pw, ph })
    }

    pub fn eval(&self, x: f64) -> f64 {
        knee(x, self.px, self.pw, self.ph)
    }

    pub fn eval_inverse(&self, y: f64) -> f64 {
        // the inverse is the same curve with the roles of p_w and p_h swapped
        knee(y, self.px, self.ph, self.pw)
    }

    pub fn triplet(&self) -> [f64; 3] {
        [self.px, self.pw, self.ph]
    }
}

#[inline]
fn knee(x: f64, px: f64, w: f64, h: f64) -> f64 {
    let lo = px * (1.0 - w);
    if x < lo {
        (1.0 - h) / (1.0 - w) * x
    } else if lo + w < x {
        (1.0 - h) / (1.0 - w) * x + (h - w) / (1.0 - w)
    } else {
        h / w * (x - lo) + px * (1.0 - h)
    }
}

/// A monotone per-channel tone curve with three parameters that is inverted by
/// the 4-D lookup table.
pub trait ToneCurve: Copy + Sized {
    fn from_triplet(p: [f64; 3]) -> Result<Self>;
    fn triplet(&self) -> [f64; 3];
    fn eval(&self, x: f64) -> f64;
}

/// Gamma tone curve `x^E(x)`,
/// `E(x) = (1/g1)·(1 − (1−g2)·x^(1/g1)) / (1 − (1−g2)·k^(1/g1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCurve {
    pub g1: f64,
    pub g2: f64,
    pub k: f64,
}

impl GammaCurve {
    pub const IDENTITY: GammaCurve = GammaCurve {
        g1: 1.0,
        g2: 1.0,
        k: 0.5,
    };

    pub fn new(g1: f64, g2: f64, k: f64) -> Result<Self> {
        let finite = g1.is_finite() && g2.is_finite() && k.is_finite();
        if !finite || g1 <= 0.0 || g2 <= 0.0 || k < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma needs g1 > 0, g2 > 0, k >= 0; got ({g1}, {g2}, {k})"
            )));
        }
        let denom = 1.0 - (1.0 - g2) * k.powf(1.0 / g1);
        if denom <= 0.0 || !denom.is_finite() {
            return Err(Error::InvalidParams(format!(
                "gamma normalizer vanishes for ({g1}, {g2}, {k})"
            )));
        }
        Ok(Self { g1, g2, k })
    }
}

impl ToneCurve for GammaCurve {
    fn from_triplet(p: [f64; 3]) -> Result<Self> {
        Self::new(p[0], p[1], p[2])
    }

    fn triplet(&self) -> [f64; 3] {
        [self.g1, self.g2, self.k]
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        // 0^E := 0; negatives from color correction are clamped only here
        if !(x > 0.0) {
            return 0.0;
        }
        let inv = 1.0 / self.g1;
        let e = inv * (1.0 - (1.0 - self.g2) * x.powf(inv))
            / (1.0 - (1.0 - self.g2) * self.k.powf(inv));
        x.powf(e)
    }
}

/// Inverse tone curve `x^E(x)`,
/// `E(x) = g3·(1 + g4·(x+1)^g3) / (1 + g4·(k2+1)^g3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvToneCurve {
    pub g3: f64,
    pub g4: f64,
    pub k2: f64,
}

impl InvToneCurve {
    pub const IDENTITY: InvToneCurve = InvToneCurve {
        g3: 1.0,
        g4: 0.0,
        k2: 0.5,
    };

    pub fn new(g3: f64, g4: f64, k2: f64) -> Result<Self> {
        let finite = g3.is_finite() && g4.is_finite() && k2.is_finite();
        if !finite || g3 <= 0.0 || g4 < 0.0 || k2 < 0.0 {
            return Err(Error::InvalidParams(format!(
                "inverse tone needs g3 > 0, g4 >= 0, k2 >= 0; got ({g3}, {g4}, {k2})"
            )));
        }
        Ok(Self { g3, g4, k2 })
    }
}

impl ToneCurve for InvToneCurve {
    fn from_triplet(p: [f64; 3]) -> Result<Self> {
        Self::new(p[0], p[1], p[2])
    }

    fn triplet(&self) -> [f64; 3] {
        [self.g3, self.g4, self.k2]
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let e = self.g3 * (1.0 + self.g4 * (x + 1.0).powf(self.g3))
            / (1.0 + self.g4 * (self.k2 + 1.0).powf(self.g3));
        x.powf(e)
    }
}

/// Per-channel (r, g, b) parameters of one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerChannel<T>(pub [T; 3]);

impl<T: Copy> PerChannel<T> {
    pub fn splat(v: T) -> Self {
        Self([v; 3])
    }

    pub fn channel(&self, c: usize) -> &T {
        &self.0[c]
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.0.iter()
    }
}

pub type KneeCurveParams = PerChannel<KneeCurve>;
pub type GammaParams = PerChannel<GammaCurve>;
pub type InvToneParams = PerChannel<InvToneCurve>;

/// One full ISP parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IspParamSet {
    pub id: u64,
    pub cc: CcParams,
    pub gain: KneeCurveParams,
    pub gamma: GammaParams,
    pub contrast: KneeCurveParams,
    pub inv_tone: Option<InvToneParams>,
}

impl IspParamSet {
    pub fn identity(id: u64, pipeline: Pipeline) -> Self {
        Self {
            id,
            cc: CcParams::IDENTITY,
            gain: PerChannel::splat(KneeCurve::IDENTITY),
            gamma: PerChannel::splat(GammaCurve::IDENTITY),
            contrast: PerChannel::splat(KneeCurve::IDENTITY),
            inv_tone: match pipeline {
                Pipeline::Isp => None,
                Pipeline::Ie => Some(PerChannel::splat(InvToneCurve::IDENTITY)),
            },
        }
    }

    pub fn pipeline(&self) -> Pipeline {
        if self.inv_tone.is_some() {
            Pipeline::Ie
        } else {
            Pipeline::Isp
        }
    }

    /// Flat vector: cc (9, row-major), then gain, gamma, contrast and, for the
    /// ie pipeline, inverse tone, each as r, g, b triplets.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.cc.row_major().to_vec();
        v.extend(self.gain.iter().flat_map(|c| c.triplet()));
        v.extend(self.gamma.iter().flat_map(|c| c.triplet()));
        v.extend(self.contrast.iter().flat_map(|c| c.triplet()));
        if let Some(it) = &self.inv_tone {
            v.extend(it.iter().flat_map(|c| c.triplet()));
        }
        v
    }

    pub fn from_vector(id: u64, pipeline: Pipeline, v: &[f64]) -> Result<Self> {
        if v.len() != pipeline.vector_len() {
            return Err(Error::LengthMismatch {
                expected: pipeline.vector_len(),
                found: v.len(),
            });
        }
        let triplet = |start: usize, ch: usize| -> [f64; 3] {
            let o = start + ch * 3;
            [v[o], v[o + 1], v[o + 2]]
        };
        let knee = |start: usize| -> Result<KneeCurveParams> {
            let mk = |ch| {
                let t = triplet(start, ch);
                KneeCurve::new(t[0], t[1], t[2])
            };
            Ok(PerChannel([mk(0)?, mk(1)?, mk(2)?]))
        };
        fn tone<C: ToneCurve>(t: impl Fn(usize) -> [f64; 3]) -> Result<PerChannel<C>> {
            Ok(PerChannel([
                C::from_triplet(t(0))?,
                C::from_triplet(t(1))?,
                C::from_triplet(t(2))?,
            ]))
        }
        Ok(Self {
            id,
            cc: CcParams::from_row_major(&v[..9])?,
            gain: knee(9)?,
            gamma: tone(|ch| triplet(18, ch))?,
            contrast: knee(27)?,
            inv_tone: match pipeline {
                Pipeline::Isp => None,
                Pipeline::Ie => Some(tone(|ch| triplet(36, ch))?),
            },
        })
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }
}

impl From<[f64; 2]> for Range {
    fn from(v: [f64; 2]) -> Self {
        Self { lo: v[0], hi: v[1] }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

/// Domain ranges of every ISP parameter. These also bound the lookup-table axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub cc: Range,
    pub px: Range,
    pub pw: Range,
    pub ph: Range,
    pub g1: Range,
    pub g2: Range,
    pub k: Range,
    pub g3: Range,
    pub g4: Range,
    pub k2: Range,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            cc: Range::new(-2.0, 2.0),
            px: Range::new(0.0, 1.0),
            pw: Range::new(0.05, 0.95),
            ph: Range::new(0.05, 0.95),
            g1: Range::new(0.5, 4.0),
            g2: Range::new(0.1, 2.0),
            k: Range::new(0.01, 1.0),
            g3: Range::new(0.5, 4.0),
            g4: Range::new(0.0, 4.0),
            k2: Range::new(0.0, 1.0),
        }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("cc", self.cc),
            ("px", self.px),
            ("pw", self.pw),
            ("ph", self.ph),
            ("g1", self.g1),
            ("g2", self.g2),
            ("k", self.k),
            ("g3", self.g3),
            ("g4", self.g4),
            ("k2", self.k2),
        ];
        for (name, r) in all {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo < r.hi) {
                return Err(Error::RangeViolation(format!(
                    "range {name} = [{}, {}] is empty or non-finite",
                    r.lo, r.hi
                )));
            }
        }
        Ok(())
    }

    /// Check every parameter of `p` lies inside its range.
    pub fn check(&self, p: &IspParamSet) -> Result<()> {
        let fail = |what: &str, v: f64, r: Range| {
            Err(Error::RangeViolation(format!(
                "set {}: {what} = {v} outside [{}, {}]",
                p.id, r.lo, r.hi
            )))
        };
        for (i, &v) in p.cc.row_major().iter().enumerate() {
            if !self.cc.contains(v) {
                return fail(&format!("cc[{i}]"), v, self.cc);
            }
        }
        for (stage, knee) in [("gain", &p.gain), ("contrast", &p.contrast)] {
            for (c, k) in knee.iter().enumerate() {
                for (name, v, r) in [("px", k.px, self.px), ("pw", k.pw, self.pw), ("ph", k.ph, self.ph)] {
                    if !r.contains(v) {
                        return fail(&format!("{stage}[{c}].{name}"), v, r);
                    }
                }
            }
        }
        for (c, g) in p.gamma.iter().enumerate() {
            for (name, v, r) in [("g1", g.g1, self.g1), ("g2", g.g2, self.g2), ("k", g.k, self.k)] {
                if !r.contains(v) {
                    return fail(&format!("gamma[{c}].{name}"), v, r);
                }
            }
        }
        if let Some(it) = &p.inv_tone {
            for (c, g) in it.iter().enumerate() {
                for (name, v, r) in [("g3", g.g3, self.g3), ("g4", g.g4, self.g4), ("k2", g.k2, self.k2)] {
                    if !r.contains(v) {
                        return fail(&format!("inv_tone[{c}].{name}"), v, r);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_lengths() {
        assert_eq!(Pipeline::Isp.vector_len(), 36);
        assert_eq!(Pipeline::Ie.vector_len(), 45);
    }

    #[test]
    fn vector_round_trip() {
        let p = IspParamSet::identity(3, Pipeline::Ie);
        let v = p.to_vector();
        assert_eq!(IspParamSet::from_vector(3, Pipeline::Ie, &v).unwrap(), p);
        assert!(matches!(
            IspParamSet::from_vector(3, Pipeline::Isp, &v),
            Err(Error::LengthMismatch { expected: 36, found: 45 })
        ));
    }

    #[test]
    fn singular_matrix_rejected() {
        let r = CcParams::new([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]);
        assert!(matches!(r, Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn knee_bounds_are_open() {
        assert!(KneeCurve::new(0.5, 0.0, 0.5).is_err());
        assert!(KneeCurve::new(0.5, 0.5, 1.0).is_err());
        assert!(KneeCurve::new(1.1, 0.5, 0.5).is_err());
        assert!(KneeCurve::new(1.0, 0.5, 0.5).is_ok());
        assert!(KneeCurve::new(0.0, 0.5, 0.5).is_ok());
    }

    #[test]
    fn inverse_matrix_is_inverse() {
        let cc = CcParams::new([[1.3, -0.2, 0.1], [0.05, 0.9, -0.3], [0.2, 0.1, 1.7]]).unwrap();
        let inv = cc.inverse_matrix().unwrap();
        let m = cc.matrix();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn range_check_reports_offender() {
        let mut p = IspParamSet::identity(9, Pipeline::Isp);
        p.gamma.0[1].g1 = 5.0;
        let err = ParamRanges::default().check(&p).unwrap_err().to_string();
        assert!(err.contains("gamma[1].g1"), "{err}");
    }
}
