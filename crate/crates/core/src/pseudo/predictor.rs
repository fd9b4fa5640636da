//! Choosing the ISP parameter set that renders a RAW image in the target style.
//!
//! The trained parameter encoder is not part of this crate. Three substitutes
//! are available: a fixed set, a statistics match against the bank, and an
//! external program that speaks a one-line protocol over its standard streams.

use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{parse_entry_line, ParamBank};
use crate::error::{Error, Result};
use crate::imaging::{resize_area, save_image, PlanarImage, SaveFormat};
use crate::isp::{apply_isp, IspParamSet};
use crate::rng::{stream, Purpose};

pub const THUMB_WIDTH: usize = 128;
pub const THUMB_HEIGHT: usize = 96;
/// Banks larger than this are searched on a random subsample.
pub const SUBSAMPLE_ABOVE: usize = 2048;
pub const MIN_SUBSAMPLE: usize = 512;
pub const EXTERNAL_TIMEOUT: Duration = Duration::from_secs(60);

/// Global image statistics used to compare renderings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatVector {
    pub mean: [f64; 3],
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

impl StatVector {
    pub fn of(img: &PlanarImage) -> Self {
        let n = img.plane_len();
        let mut mean = [0.0; 3];
        for (c, m) in mean.iter_mut().enumerate() {
            *m = img.plane(c).iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        }
        let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
        let mut lum: Vec<f64> = (0..n)
            .map(|i| 0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64)
            .collect();
        lum.sort_by(f64::total_cmp);
        Self {
            mean,
            p5: percentile(&lum, 0.05),
            p50: percentile(&lum, 0.50),
            p95: percentile(&lum, 0.95),
        }
    }

    fn as_array(&self) -> [f64; 6] {
        [self.mean[0], self.mean[1], self.mean[2], self.p5, self.p50, self.p95]
    }

    pub fn distance(&self, other: &StatVector) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Linear interpolation between closest ranks.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// A command line with an `{input}` placeholder. The program receives the RAW
/// image as a float container at that path and prints one bank entry line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalPredictor {
    pub argv: Vec<String>,
    pub timeout: Duration,
}

impl ExternalPredictor {
    /// Split `template` on whitespace.
    pub fn parse(template: &str) -> Result<Self> {
        let argv: Vec<String> = template.split_whitespace().map(str::to_string).collect();
        if argv.is_empty() {
            return Err(Error::InvalidParams("empty predictor command".into()));
        }
        if !argv.iter().any(|a| a.contains("{input}")) {
            return Err(Error::InvalidParams("predictor command lacks an {input} token".into()));
        }
        Ok(Self {
            argv,
            timeout: EXTERNAL_TIMEOUT,
        })
    }

    fn run(&self, raw: &PlanarImage, bank: &ParamBank) -> Result<IspParamSet> {
        let fail = |m: String| Error::ExternalPredictorFailure(m);
        let tmp = tempfile::Builder::new()
            .suffix(".rft")
            .tempfile()
            .map_err(|e| fail(format!("temp file: {e}")))?;
        save_image(raw, tmp.path(), SaveFormat::F32)?;
        let input = tmp.path().to_string_lossy();
        let args: Vec<String> = self.argv.iter().map(|a| a.replace("{input}", &input)).collect();
        let mut child = Command::new(&args[0])
            .args(&args[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(format!("{}: {e}", args[0])))?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        let start = Instant::now();
        let status = loop {
            match child.try_wait().map_err(|e| fail(e.to_string()))? {
                Some(status) => break status,
                None if start.elapsed() > self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(fail(format!("timed out after {:?}", self.timeout)));
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        };
        let out = reader
            .join()
            .map_err(|_| fail("stdout reader panicked".into()))?
            .map_err(|e| fail(format!("reading stdout: {e}")))?;
        if !status.success() {
            return Err(fail(format!("exited with {status}")));
        }
        let line = out
            .lines()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| fail("no output".into()))?;
        let p = parse_entry_line(line, bank.pipeline()).map_err(|e| fail(e.to_string()))?;
        bank.ranges().check(&p).map_err(|e| fail(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Fixed(IspParamSet),
    /// Pick the bank entry whose rendering of the RAW thumbnail best matches
    /// `target`. Banks above [`SUBSAMPLE_ABOVE`] entries are searched on a
    /// seeded subsample of `subsample` entries.
    StatMatch {
        target: StatVector,
        subsample: usize,
        seed: u64,
    },
    External(ExternalPredictor),
}

impl Predictor {
    pub fn stat_match(target: StatVector, seed: u64) -> Self {
        Predictor::StatMatch {
            target,
            subsample: MIN_SUBSAMPLE,
            seed,
        }
    }
}

pub fn predict_params(raw: &PlanarImage, predictor: &Predictor, bank: &ParamBank) -> Result<IspParamSet> {
    match predictor {
        Predictor::Fixed(p) => Ok(*p),
        Predictor::External(ext) => ext.run(raw, bank),
        Predictor::StatMatch {
            target,
            subsample,
            seed,
        } => {
            let entries = bank.entries();
            let candidates: Vec<usize> = if entries.len() > SUBSAMPLE_ABOVE {
                let k = (*subsample).max(MIN_SUBSAMPLE).min(entries.len());
                let mut idx = index::sample(&mut stream(*seed, Purpose::PredictorSubsample, 0), entries.len(), k).into_vec();
                idx.sort_unstable();
                idx
            } else {
                (0..entries.len()).collect()
            };
            let thumb = resize_area(raw, THUMB_WIDTH, THUMB_HEIGHT)?;
            let scored = candidates
                .par_iter()
                .map(|&i| {
                    let rendered = apply_isp(&thumb, &entries[i], bank.pipeline())?;
                    Ok((StatVector::of(&rendered).distance(target), i))
                })
                .collect::<Result<Vec<_>>>()?;
            let best = scored
                .into_iter()
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .expect("bank is never empty");
            Ok(entries[best.1])
        }
    }
}
