//! Pseudo-data generation: one-to-many sRGB-to-RAW, the sRGB quality update and
//! sensor noise synthesis.

mod dataset;
mod noise;
mod predictor;

pub use dataset::{
    generate_dataset, list_sources, DatasetConfig, ErrorRecord, Manifest, NoiseRecord, PairRecord, RunHeader,
    Task, MANIFEST_NAME,
};
pub use noise::{add_noise, NoiseParams, SIGMA_R_SQ_MAX, SIGMA_S_SQ_MAX};
pub use predictor::{
    predict_params, ExternalPredictor, Predictor, StatVector, EXTERNAL_TIMEOUT, MIN_SUBSAMPLE,
    SUBSAMPLE_ABOVE, THUMB_HEIGHT, THUMB_WIDTH,
};

use crate::bank::{DrawnSet, ParamBank, SampleMode};
use crate::error::Result;
use crate::imaging::{ColorRole, ImageMeta, PlanarImage};
use crate::inverse::{invert_isp, LutSet};
use crate::isp::{apply_isp, IspParamSet};
use crate::rng::Purpose;

/// A pseudo-RAW image and the parameter set that produced it.
#[derive(Debug, Clone)]
pub struct RawDraw {
    pub image: PlanarImage,
    pub drawn: DrawnSet,
    pub meta: ImageMeta,
}

/// Invert `img` through a parameter set drawn from `bank`.
pub fn srgb_to_raw(
    img: &PlanarImage,
    bank: &ParamBank,
    mode: SampleMode,
    luts: &LutSet,
    draw_index: u64,
) -> Result<RawDraw> {
    raw_with(img, bank, mode, Purpose::BankDraw, luts, draw_index)
}

fn raw_with(
    img: &PlanarImage,
    bank: &ParamBank,
    mode: SampleMode,
    purpose: Purpose,
    luts: &LutSet,
    draw_index: u64,
) -> Result<RawDraw> {
    let drawn = bank.sample_set_for(mode, purpose, draw_index);
    let image = invert_isp(img, &drawn.params, luts, bank.pipeline())?;
    Ok(RawDraw {
        image,
        drawn,
        meta: ImageMeta::new(format!("draw {draw_index}"), ColorRole::PseudoRaw, Some(mode.seed)),
    })
}

/// Result of the three-step quality update.
#[derive(Debug, Clone)]
pub struct QualityPair {
    /// Pseudo ground truth.
    pub updated: PlanarImage,
    /// Pseudo input.
    pub pseudo_raw: PlanarImage,
    pub first: DrawnSet,
    pub predicted: IspParamSet,
    pub last: DrawnSet,
}

/// Re-render a general-quality sRGB image in the style the predictor encodes,
/// then invert the result again to get a matching pseudo-RAW.
///
/// Step 1 inverts with a whole-set draw, step 2 renders the RAW with the
/// predicted set, step 3 inverts the rendered image with a draw in
/// `mode_final`. Steps 1 and 3 use independent streams of `mode_final.seed`.
pub fn update_srgb_quality(
    img: &PlanarImage,
    bank: &ParamBank,
    predictor: &Predictor,
    luts: &LutSet,
    mode_final: SampleMode,
    draw_index: u64,
) -> Result<QualityPair> {
    let first = raw_with(
        img,
        bank,
        SampleMode::per_set(mode_final.seed),
        Purpose::QualityFirstDraw,
        luts,
        draw_index,
    )?;
    let predicted = predict_params(&first.image, predictor, bank)?;
    let updated = apply_isp(&first.image, &predicted, bank.pipeline())?;
    let last = raw_with(&updated, bank, mode_final, Purpose::QualityFinalDraw, luts, draw_index)?;
    Ok(QualityPair {
        updated,
        pseudo_raw: last.image,
        first: first.drawn,
        predicted,
        last: last.drawn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::LutDims;
    use crate::isp::{ParamRanges, Pipeline};

    fn test_image() -> PlanarImage {
        PlanarImage::from_fn(24, 16, |c, x, y| {
            (0.1 + 0.8 * ((x * 7 + y * 3 + c * 5) % 23) as f32 / 22.0).min(1.0)
        })
        .unwrap()
    }

    fn small_luts(pipeline: Pipeline) -> LutSet {
        LutSet::build(pipeline, &ParamRanges::default(), LutDims::new(8, 6, 6, 2000, 128).unwrap()).unwrap()
    }

    #[test]
    fn identity_bank_is_near_identity() {
        let bank = ParamBank::new(Pipeline::Isp, ParamRanges::default(), vec![IspParamSet::identity(0, Pipeline::Isp)]).unwrap();
        let luts = small_luts(Pipeline::Isp);
        let img = test_image();
        let out = srgb_to_raw(&img, &bank, SampleMode::per_set(1), &luts, 0).unwrap();
        assert_eq!(out.meta.role, ColorRole::PseudoRaw);
        for (a, b) in out.image.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 2e-3, "{a} vs {b}");
        }
        let pair = update_srgb_quality(
            &img,
            &bank,
            &Predictor::Fixed(IspParamSet::identity(0, Pipeline::Isp)),
            &luts,
            SampleMode::per_function(3),
            5,
        )
        .unwrap();
        for (a, b) in pair.updated.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 4e-3);
        }
    }

    #[test]
    fn draws_differ_and_repeat() {
        let bank = ParamBank::synthetic(Pipeline::Isp, ParamRanges::default(), 8, 11).unwrap();
        let luts = small_luts(Pipeline::Isp);
        let img = test_image();
        let mode = SampleMode::per_set(2);
        let a = srgb_to_raw(&img, &bank, mode, &luts, 0).unwrap();
        let again = srgb_to_raw(&img, &bank, mode, &luts, 0).unwrap();
        assert_eq!(a.image, again.image);
        let differing = (1..10)
            .map(|d| srgb_to_raw(&img, &bank, mode, &luts, d).unwrap())
            .filter(|b| b.drawn.origin != a.drawn.origin)
            .map(|b| {
                b.image
                    .data()
                    .iter()
                    .zip(a.image.data())
                    .filter(|(x, y)| (*x - *y).abs() > 1e-3)
                    .count()
            })
            .collect::<Vec<_>>();
        assert!(!differing.is_empty());
        assert!(differing.iter().all(|&n| n * 100 >= img.data().len()));
    }

    #[test]
    fn chimeric_final_draw_changes_pseudo_raw() {
        let bank = ParamBank::synthetic(Pipeline::Ie, ParamRanges::default(), 16, 3).unwrap();
        let luts = small_luts(Pipeline::Ie);
        let img = test_image();
        let pred = Predictor::Fixed(bank.entries()[0]);
        let a = update_srgb_quality(&img, &bank, &pred, &luts, SampleMode::per_set(9), 4).unwrap();
        let b = update_srgb_quality(&img, &bank, &pred, &luts, SampleMode::per_function(9), 4).unwrap();
        assert_eq!(a.updated, b.updated);
        assert_ne!(a.pseudo_raw, b.pseudo_raw);
        let again = update_srgb_quality(&img, &bank, &pred, &luts, SampleMode::per_function(9), 4).unwrap();
        assert_eq!(again.pseudo_raw, b.pseudo_raw);
    }
}
