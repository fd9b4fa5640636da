use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lut::{InverseLut4D, LutStage};
use crate::isp::{validate_gamma, GammaCurve, InvToneCurve, PerChannel, ToneCurve, VALIDATION_GRID};
use crate::rng::{stream, Purpose};

/// Round-trip error `|f(f⁻¹(y)) − y|` statistics of a lookup table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param_sets: usize,
    pub pixels: usize,
    pub mean: f64,
    pub max: f64,
}

/// Evaluate `lut` at `param_sets` random parameter triples (uniform over the
/// table's axes, redrawn until the curve is strictly increasing) and
/// `pixels_per_set` uniform output levels each.
pub fn sweep_round_trip(lut: &InverseLut4D, param_sets: usize, pixels_per_set: usize, seed: u64) -> SweepReport {
    match lut.stage() {
        LutStage::Gamma => sweep::<GammaCurve>(lut, param_sets, pixels_per_set, seed),
        LutStage::InvTone => sweep::<InvToneCurve>(lut, param_sets, pixels_per_set, seed),
    }
}

fn sweep<C: ToneCurve + Sync>(lut: &InverseLut4D, param_sets: usize, pixels_per_set: usize, seed: u64) -> SweepReport {
    let ranges = *lut.ranges();
    let per_set: Vec<(f64, f64)> = (0..param_sets as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Purpose::Sweep, i);
            let curve = loop {
                let t = ranges.map(|r| r.lo + r.span() * rng.random::<f64>());
                if let Ok(c) = C::from_triplet(t) {
                    if validate_gamma(&PerChannel::splat(c), VALIDATION_GRID) {
                        break c;
                    }
                }
            };
            let t = curve.triplet();
            let (mut sum, mut max) = (0.0, 0.0f64);
            for _ in 0..pixels_per_set {
                let y: f64 = rng.random();
                let e = (curve.eval(lut.interpolate(t, y)) - y).abs();
                sum += e;
                max = max.max(e);
            }
            (sum, max)
        })
        .collect();
    let pixels = param_sets * pixels_per_set;
    let (sum, max) = per_set.iter().fold((0.0, 0.0f64), |(s, m), &(a, b)| (s + a, m.max(b)));
    SweepReport {
        param_sets,
        pixels,
        mean: if pixels == 0 { 0.0 } else { sum / pixels as f64 },
        max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::{build_inverse_lut, LutDims};
    use crate::isp::ParamRanges;

    #[test]
    fn sweep_is_deterministic_and_finer_is_better() {
        let r = ParamRanges::default();
        let coarse = build_inverse_lut(LutStage::Gamma, &r, LutDims::new(6, 4, 4, 400, 32).unwrap(), false).unwrap().0;
        let fine = build_inverse_lut(LutStage::Gamma, &r, LutDims::new(12, 8, 8, 1600, 128).unwrap(), false).unwrap().0;
        let a = sweep_round_trip(&coarse, 50, 100, 3);
        assert_eq!(a, sweep_round_trip(&coarse, 50, 100, 3));
        assert_eq!(a.pixels, 5000);
        let b = sweep_round_trip(&fine, 50, 100, 3);
        assert!(b.mean < a.mean, "{b:?} vs {a:?}");
    }
}
