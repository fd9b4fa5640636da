//! Directory-level driver that turns a folder of sRGB images into pseudo pairs.
//!
//! Pair `k` uses source `k mod S` (sources sorted by file name) and draw index
//! `k` for every random decision, so any pair can be regenerated from the
//! manifest alone and the outputs do not depend on the worker count.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{add_noise, srgb_to_raw, update_srgb_quality, NoiseParams, Predictor};
use crate::bank::{ParamBank, SampleMode, SampleModeKind, SetOrigin};
use crate::error::{Error, Result};
use crate::imaging::{load_image, output_path, save_image, BitDepthHint, SaveFormat};
use crate::inverse::LutSet;
use crate::isp::Pipeline;

pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const MANIFEST_VERSION: u32 = 1;

/// What each pair consists of.
#[derive(Debug, Clone, Copy)]
pub enum Task<'a> {
    /// Pseudo-RAW only.
    SrgbToRaw,
    /// Quality-updated sRGB plus its pseudo-RAW.
    QualityUpdate(&'a Predictor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub mode: SampleModeKind,
    pub seed: u64,
    pub noise: bool,
    /// Number of pairs; `None` produces one per source image.
    pub count: Option<usize>,
    /// Maximum simultaneous external predictor processes.
    pub external_concurrency: usize,
}

impl DatasetConfig {
    pub fn new(mode: SampleModeKind, seed: u64) -> Self {
        Self {
            mode,
            seed,
            noise: false,
            count: None,
            external_concurrency: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub kind: String,
    pub version: u32,
    pub task: String,
    pub pipeline: Pipeline,
    pub mode: SampleModeKind,
    pub seed: u64,
    pub noise: bool,
    pub sources: usize,
    pub pairs: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub sigma_s_sq: f64,
    pub sigma_r_sq: f64,
    pub noise_draw: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair: u64,
    pub src: String,
    /// Relative to the output directory.
    pub raw_path: String,
    pub srgb_path: Option<String>,
    pub draw: u64,
    /// Set used for the first inversion (quality update only).
    pub first_set: Option<SetOrigin>,
    pub predicted_set: Option<u64>,
    /// Set used for the pseudo-RAW written to `raw_path`.
    pub raw_set: SetOrigin,
    pub noise: Option<NoiseRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub pair: u64,
    pub src: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: RunHeader,
    pub pairs: Vec<PairRecord>,
    pub errors: Vec<ErrorRecord>,
}

impl Manifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut line = |v: serde_json::Value| -> Result<()> {
            writeln!(w, "{v}").map_err(|e| Error::io(path, e))
        };
        line(serde_json::to_value(&self.header).expect("serializable"))?;
        for p in &self.pairs {
            line(serde_json::to_value(p).expect("serializable"))?;
        }
        for e in &self.errors {
            line(serde_json::to_value(e).expect("serializable"))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Image files (png or float container) directly inside `dir`, sorted by name.
pub fn list_sources(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png") | Some("rft")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().expect("semaphore poisoned");
            while *free == 0 {
                free = self.cv.wait(free).expect("semaphore poisoned");
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().expect("semaphore poisoned") += 1;
        self.cv.notify_one();
        out
    }
}

/// Generate pairs from every image in `src_dir` into `out_dir` and write
/// `out_dir/manifest.jsonl`. Per-pair failures are logged and recorded; the
/// call itself fails only on setup errors.
pub fn generate_dataset(
    src_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    bank: &ParamBank,
    luts: &LutSet,
    task: Task<'_>,
    cfg: &DatasetConfig,
) -> Result<Manifest> {
    let (src_dir, out_dir) = (src_dir.as_ref(), out_dir.as_ref());
    let sources = list_sources(src_dir)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let count = if sources.is_empty() {
        0
    } else {
        cfg.count.unwrap_or(sources.len())
    };
    let gate = Semaphore::new(cfg.external_concurrency);
    let results: Vec<_> = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let src = &sources[k as usize % sources.len()];
            make_pair(k, src, out_dir, bank, luts, task, cfg, &gate).map_err(|e| {
                log::warn!("pair {k} from {}: {e}", src.display());
                ErrorRecord {
                    pair: k,
                    src: src.display().to_string(),
                    error: e.to_string(),
                }
            })
        })
        .collect();
    let (mut pairs, mut errors) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(p) => pairs.push(p),
            Err(e) => errors.push(e),
        }
    }
    let manifest = Manifest {
        header: RunHeader {
            kind: "run".into(),
            version: MANIFEST_VERSION,
            task: match task {
                Task::SrgbToRaw => "raw_gen",
                Task::QualityUpdate(_) => "quality_update",
            }
            .into(),
            pipeline: bank.pipeline(),
            mode: cfg.mode,
            seed: cfg.seed,
            noise: cfg.noise,
            sources: sources.len(),
            pairs: pairs.len(),
            errors: errors.len(),
        },
        pairs,
        errors,
    };
    manifest.write(out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}

fn file_name(p: &Path) -> String {
    p.file_name().expect("output file").to_string_lossy().into_owned()
}

#[allow(clippy::too_many_arguments)]
fn make_pair(
    k: u64,
    src: &Path,
    out_dir: &Path,
    bank: &ParamBank,
    luts: &LutSet,
    task: Task<'_>,
    cfg: &DatasetConfig,
    gate: &Semaphore,
) -> Result<PairRecord> {
    let img = load_image(src, BitDepthHint::Auto)?;
    let mode = SampleMode {
        kind: cfg.mode,
        seed: cfg.seed,
    };
    let stem = format!("{k:06}");
    let (raw, raw_set, first_set, predicted_set, srgb_path) = match task {
        Task::SrgbToRaw => {
            let d = srgb_to_raw(&img, bank, mode, luts, k)?;
            (d.image, d.drawn.origin, None, None, None)
        }
        Task::QualityUpdate(predictor) => {
            let pair = match predictor {
                Predictor::External(_) => gate.run(|| update_srgb_quality(&img, bank, predictor, luts, mode, k))?,
                _ => update_srgb_quality(&img, bank, predictor, luts, mode, k)?,
            };
            let path = output_path(out_dir, &format!("{stem}_srgb"), SaveFormat::Png16);
            save_image(&pair.updated, &path, SaveFormat::Png16)?;
            (
                pair.pseudo_raw,
                pair.last.origin,
                Some(pair.first.origin),
                Some(pair.predicted.id),
                Some(file_name(&path)),
            )
        }
    };
    let (raw, noise) = if cfg.noise {
        let np = NoiseParams::draw(cfg.seed, k);
        let rec = NoiseRecord {
            sigma_s_sq: np.sigma_s_sq,
            sigma_r_sq: np.sigma_r_sq,
            noise_draw: k,
        };
        (add_noise(&raw, np, cfg.seed, k, false), Some(rec))
    } else {
        (raw, None)
    };
    let raw_path = output_path(out_dir, &format!("{stem}_raw"), SaveFormat::F32);
    save_image(&raw, &raw_path, SaveFormat::F32)?;
    Ok(PairRecord {
        pair: k,
        src: src.display().to_string(),
        raw_path: file_name(&raw_path),
        srgb_path,
        draw: k,
        first_set,
        predicted_set,
        raw_set,
        noise,
    })
}
