use crate::error::{Error, Result};
use crate::imaging::PlanarImage;

/// Default pooling kernels for the noise-robust L1 loss.
pub const POOL_KERNELS: [usize; 3] = [16, 32, 64];
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn mean_of(x: &PlanarImage, y: &PlanarImage, f: impl Fn(f64) -> f64) -> Result<f64> {
    x.ensure_same_shape(y)?;
    let sum: f64 = x.data().iter().zip(y.data()).map(|(&a, &b)| f(a as f64 - b as f64)).sum();
    Ok(sum / x.data().len() as f64)
}

pub fn mse_loss(x: &PlanarImage, y: &PlanarImage) -> Result<f64> {
    mean_of(x, y, |d| d * d)
}

pub fn l1_loss(x: &PlanarImage, y: &PlanarImage) -> Result<f64> {
    mean_of(x, y, f64::abs)
}

/// L1 plus the L1 of `k×k` mean-pooled images for every `k` in `kernels`.
/// Pooling is non-overlapping; edge cells average over the pixels they cover.
/// Kernels larger than either image side are skipped with a warning.
pub fn pooled_l1_loss(x: &PlanarImage, y: &PlanarImage, kernels: &[usize]) -> Result<f64> {
    let mut total = l1_loss(x, y)?;
    let (w, h) = (x.width(), x.height());
    for &k in kernels {
        if k == 0 {
            return Err(Error::InvalidParams("pooling kernel must be positive".into()));
        }
        if k > w || k > h {
            log::warn!("skipping {k}x{k} pooling on a {w}x{h} image");
            continue;
        }
        let (cw, ch) = (w.div_ceil(k), h.div_ceil(k));
        let mut sum = 0.0;
        for c in 0..PlanarImage::CHANNELS {
            let (px, py) = (x.plane(c), y.plane(c));
            let mut cells = vec![0.0f64; cw * ch];
            for row in 0..h {
                let base = (row / k) * cw;
                for col in 0..w {
                    let i = row * w + col;
                    cells[base + col / k] += px[i] as f64 - py[i] as f64;
                }
            }
            for (j, v) in cells.iter().enumerate() {
                let (gx, gy) = (j % cw, j / cw);
                let area = ((gx * k + k).min(w) - gx * k) * ((gy * k + k).min(h) - gy * k);
                sum += (v / area as f64).abs();
            }
        }
        total += sum / (cw * ch * PlanarImage::CHANNELS) as f64;
    }
    Ok(total)
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable filtering over the positions where the window fits entirely.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(j, a)| a * rows[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// `1 - SSIM`, with an 11×11 Gaussian window (σ = 1.5) and data range 1,
/// averaged over the positions where the window fits and then over channels.
pub fn ssim_loss(x: &PlanarImage, y: &PlanarImage) -> Result<f64> {
    x.ensure_same_shape(y)?;
    let (w, h) = (x.width(), x.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidParams(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let k = gaussian_kernel();
    let mut total = 0.0;
    for c in 0..PlanarImage::CHANNELS {
        let a: Vec<f64> = x.plane(c).iter().map(|&v| v as f64).collect();
        let b: Vec<f64> = y.plane(c).iter().map(|&v| v as f64).collect();
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
        let ux = filter_valid(&a, w, h, &k);
        let uy = filter_valid(&b, w, h, &k);
        let uxx = filter_valid(&prod(&a, &a), w, h, &k);
        let uyy = filter_valid(&prod(&b, &b), w, h, &k);
        let uxy = filter_valid(&prod(&a, &b), w, h, &k);
        let n = ux.len();
        let mut s = 0.0;
        for i in 0..n {
            let (mx, my) = (ux[i], uy[i]);
            let vx = uxx[i] - mx * mx;
            let vy = uyy[i] - my * my;
            let vxy = uxy[i] - mx * my;
            s += ((2.0 * mx * my + C1) * (2.0 * vxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
        }
        total += s / n as f64;
    }
    Ok(1.0 - total / PlanarImage::CHANNELS as f64)
}
