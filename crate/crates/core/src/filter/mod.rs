//! Online pseudo-data filtering for semi-supervised batches.
//!
//! A batch holds `n_real` real pairs and `n_pseudo` generated pairs. Pseudo
//! samples whose loss exceeds `beta` times the mean real loss are dropped, and
//! the two means are combined in proportion to how many samples back each of
//! them. The filter works on per-sample scalar losses, so any training
//! framework can compute the losses itself and hand them over.

mod losses;

pub use losses::{l1_loss, mse_loss, pooled_l1_loss, ssim_loss, POOL_KERNELS, SSIM_WINDOW};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub beta: f64,
    pub n_real: usize,
    pub n_pseudo: usize,
}

impl FilterConfig {
    pub fn new(beta: f64, n_real: usize, n_pseudo: usize) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta must be positive, got {beta}")));
        }
        if n_real == 0 {
            return Err(Error::InvalidParams("a batch needs at least one real sample".into()));
        }
        Ok(Self {
            beta,
            n_real,
            n_pseudo,
        })
    }

    /// Config whose counts match `losses`.
    pub fn for_batch(beta: f64, losses: &BatchLosses) -> Result<Self> {
        Self::new(beta, losses.real.len(), losses.pseudo.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLosses {
    pub real: Vec<f64>,
    pub pseudo: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub l_r: f64,
    /// 1 keeps the pseudo sample, 0 drops it.
    pub delta: Vec<u8>,
    pub l_p: f64,
    pub l_semi: f64,
    pub kept: usize,
}

pub fn filter_batch(losses: &BatchLosses, cfg: &FilterConfig) -> Result<FilterReport> {
    if losses.real.len() != cfg.n_real || losses.pseudo.len() != cfg.n_pseudo {
        return Err(Error::ShapeMismatch(format!(
            "batch has {} real and {} pseudo losses, config expects {} and {}",
            losses.real.len(),
            losses.pseudo.len(),
            cfg.n_real,
            cfg.n_pseudo
        )));
    }
    if cfg.n_real == 0 {
        return Err(Error::ShapeMismatch("a batch needs at least one real sample".into()));
    }
    for (kind, v) in losses.real.iter().map(|v| ("real", v)).chain(losses.pseudo.iter().map(|v| ("pseudo", v))) {
        if !v.is_finite() || *v < 0.0 {
            return Err(Error::NonFiniteLoss(format!("{kind} loss {v}")));
        }
    }
    let l_r = losses.real.iter().sum::<f64>() / cfg.n_real as f64;
    let threshold = cfg.beta * l_r;
    let delta: Vec<u8> = losses.pseudo.iter().map(|&l| u8::from(l <= threshold)).collect();
    let kept = delta.iter().filter(|&&d| d == 1).count();
    if kept == 0 {
        return Ok(FilterReport {
            l_r,
            delta,
            l_p: 0.0,
            l_semi: l_r,
            kept,
        });
    }
    let l_p = losses
        .pseudo
        .iter()
        .zip(&delta)
        .filter(|(_, &d)| d == 1)
        .map(|(l, _)| l)
        .sum::<f64>()
        / kept as f64;
    let n_r = cfg.n_real as f64;
    let k = kept as f64;
    let l_semi = (n_r * l_r + k * l_p) / (n_r + k);
    Ok(FilterReport {
        l_r,
        delta,
        l_p,
        l_semi,
        kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(real: &[f64], pseudo: &[f64]) -> BatchLosses {
        BatchLosses {
            real: real.to_vec(),
            pseudo: pseudo.to_vec(),
        }
    }

    #[test]
    fn worked_example() {
        let b = batch(&[0.1, 0.3], &[0.15, 0.25, 0.5]);
        let r = filter_batch(&b, &FilterConfig::for_batch(1.0, &b).unwrap()).unwrap();
        assert!((r.l_r - 0.2).abs() < 1e-15);
        assert_eq!(r.delta, vec![1, 0, 0]);
        assert_eq!(r.kept, 1);
        assert!((r.l_p - 0.15).abs() < 1e-15);
        assert!((r.l_semi - 0.55 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_dropped_and_all_kept() {
        let b = batch(&[0.1, 0.2, 0.4], &[1.0, 2.0]);
        let r = filter_batch(&b, &FilterConfig::for_batch(1.0, &b).unwrap()).unwrap();
        assert_eq!(r.l_semi, r.l_r);
        assert_eq!(r.l_p, 0.0);
        let r = filter_batch(&b, &FilterConfig::for_batch(1e6, &b).unwrap()).unwrap();
        assert_eq!(r.kept, 2);
        assert!((r.l_semi - 3.7 / 5.0).abs() < 1e-15);
        let empty = batch(&[0.3], &[]);
        let r = filter_batch(&empty, &FilterConfig::for_batch(1.0, &empty).unwrap()).unwrap();
        assert_eq!(r.l_semi, 0.3);
    }

    #[test]
    fn boundary_is_kept() {
        let b = batch(&[0.5], &[0.5, 0.5000001]);
        let r = filter_batch(&b, &FilterConfig::for_batch(1.0, &b).unwrap()).unwrap();
        assert_eq!(r.delta, vec![1, 0]);
    }

    #[test]
    fn errors() {
        let b = batch(&[0.1], &[0.2]);
        assert!(matches!(
            filter_batch(&b, &FilterConfig::new(1.0, 2, 1).unwrap()),
            Err(Error::ShapeMismatch(_))
        ));
        let nan = batch(&[0.1], &[f64::NAN]);
        assert!(matches!(
            filter_batch(&nan, &FilterConfig::new(1.0, 1, 1).unwrap()),
            Err(Error::NonFiniteLoss(_))
        ));
        assert!(FilterConfig::new(0.0, 1, 1).is_err());
        assert!(FilterConfig::new(1.0, 0, 1).is_err());
    }
}
