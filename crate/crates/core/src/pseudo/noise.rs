use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::PlanarImage;
use crate::rng::{stream, Purpose};

/// Upper end of the per-image signal-dependent variance draw.
pub const SIGMA_S_SQ_MAX: f64 = 0.01;
/// Upper end of the per-image variance floor draw.
pub const SIGMA_R_SQ_MAX: f64 = 0.0002;

/// Heteroscedastic Gaussian noise: variance `sigma_s_sq * x + sigma_r_sq`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub sigma_s_sq: f64,
    pub sigma_r_sq: f64,
}

impl NoiseParams {
    pub const ZERO: NoiseParams = NoiseParams {
        sigma_s_sq: 0.0,
        sigma_r_sq: 0.0,
    };

    pub fn new(sigma_s_sq: f64, sigma_r_sq: f64) -> Result<Self> {
        if !(sigma_s_sq >= 0.0 && sigma_r_sq >= 0.0 && sigma_s_sq.is_finite() && sigma_r_sq.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "noise variances must be finite and non-negative, got {sigma_s_sq}, {sigma_r_sq}"
            )));
        }
        Ok(Self {
            sigma_s_sq,
            sigma_r_sq,
        })
    }

    /// Per-image levels: `sigma_s_sq ~ U(0, 0.01)`, `sigma_r_sq ~ U(0, 0.0002)`.
    pub fn draw(seed: u64, draw_index: u64) -> Self {
        let mut rng = stream(seed, Purpose::NoiseLevels, draw_index);
        Self {
            sigma_s_sq: rng.random::<f64>() * SIGMA_S_SQ_MAX,
            sigma_r_sq: rng.random::<f64>() * SIGMA_R_SQ_MAX,
        }
    }

    pub fn variance(&self, x: f64) -> f64 {
        self.sigma_s_sq * x.max(0.0) + self.sigma_r_sq
    }
}

/// Add one Gaussian sample per value. Negative pixels get the variance floor
/// only. With `clip` the result is clamped to `[0,1]`.
pub fn add_noise(raw: &PlanarImage, np: NoiseParams, seed: u64, draw_index: u64, clip: bool) -> PlanarImage {
    let mut rng = stream(seed, Purpose::Noise, draw_index);
    raw.map_planes(|_, x| {
        let z: f64 = rng.sample(StandardNormal);
        let v = x as f64 + np.variance(x as f64).sqrt() * z;
        let v = v as f32;
        if clip {
            v.clamp(0.0, 1.0)
        } else {
            v
        }
    })
}
