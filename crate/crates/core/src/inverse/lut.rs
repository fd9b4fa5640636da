//! 4-D lookup-table inverse of the gamma and inverse-tone curves.
//!
//! The table is indexed by the three curve parameters and the curve's output
//! level. Building it evaluates the forward curve on an even input grid for every
//! parameter node and, for each output level, stores the input grid value whose
//! forward image is nearest (first index on ties). Lookup is quadrilinear.
//!
//! Cache file layout, all little-endian:
//!
//! ```text
//! "RFL1" | u8 stage | u32 d_g1, d_g2, d_k, d_i, d_o | f64 lo/hi × 3
//!        | f32 axis_g1[d_g1] axis_g2[d_g2] axis_k[d_k] axis_out[d_o]
//!        | f32 values[d_g1·d_g2·d_k·d_o]
//! ```

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::PlanarImage;
use crate::isp::{
    monotone_margin, GammaCurve, InvToneCurve, ParamRanges, PerChannel, Range, ToneCurve,
    MONOTONE_MARGIN, VALIDATION_GRID,
};

pub const LUT_MAGIC: &[u8; 4] = b"RFL1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LutStage {
    Gamma,
    InvTone,
}

impl LutStage {
    fn code(self) -> u8 {
        match self {
            LutStage::Gamma => 0,
            LutStage::InvTone => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(LutStage::Gamma),
            1 => Some(LutStage::InvTone),
            _ => None,
        }
    }

    /// Parameter-axis ranges for this stage.
    pub fn axis_ranges(self, ranges: &ParamRanges) -> [Range; 3] {
        match self {
            LutStage::Gamma => [ranges.g1, ranges.g2, ranges.k],
            LutStage::InvTone => [ranges.g3, ranges.g4, ranges.k2],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LutStage::Gamma => "gamma",
            LutStage::InvTone => "inv_tone",
        }
    }
}

/// Curves that have a lookup-table inverse.
pub trait LutInvertible: ToneCurve + Send + Sync {
    const STAGE: LutStage;
}

impl LutInvertible for GammaCurve {
    const STAGE: LutStage = LutStage::Gamma;
}

impl LutInvertible for InvToneCurve {
    const STAGE: LutStage = LutStage::InvTone;
}

/// Grid sizes `(d_g1, d_g2, d_k, d_i, d_o)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LutDims {
    pub g1: usize,
    pub g2: usize,
    pub k: usize,
    pub input: usize,
    pub out: usize,
}

impl LutDims {
    /// The reference configuration: 60 × 30 × 30 parameter nodes, a 10000-point
    /// input grid and 512 output levels.
    pub const REFERENCE: LutDims = LutDims {
        g1: 60,
        g2: 30,
        k: 30,
        input: 10000,
        out: 512,
    };

    pub fn new(g1: usize, g2: usize, k: usize, input: usize, out: usize) -> Result<Self> {
        let d = Self {
            g1,
            g2,
            k,
            input,
            out,
        };
        if d.as_array().iter().any(|&v| v < 2 || v > u32::MAX as usize) {
            return Err(Error::InvalidParams(format!(
                "lookup-table dims must all be in [2, 2^32): {d}"
            )));
        }
        Ok(d)
    }

    pub fn as_array(&self) -> [usize; 5] {
        [self.g1, self.g2, self.k, self.input, self.out]
    }

    pub fn cells(&self) -> usize {
        self.g1 * self.g2 * self.k
    }

    pub fn value_count(&self) -> usize {
        self.cells() * self.out
    }
}

impl fmt::Display for LutDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{},{}", self.g1, self.g2, self.k, self.input, self.out)
    }
}

impl FromStr for LutDims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidParams(format!("dims {s:?}: {e}")))?;
        match parts[..] {
            [a, b, c, d, e] => Self::new(a, b, c, d, e),
            _ => Err(Error::InvalidParams(format!(
                "dims {s:?} needs five comma-separated sizes"
            ))),
        }
    }
}

/// Evenly spaced grid over `[lo, hi]` with both ends exact.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let div = (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * (i as f64 / div) })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    /// Flat indices `(g1·d_g2 + g2)·d_k + k` of parameter nodes whose curve fails
    /// the monotonicity check (or cannot be constructed).
    pub invalid_cells: Vec<usize>,
    /// Smallest and largest per-cell monotonicity margin over valid cells.
    pub min_margin: f64,
    pub max_margin: f64,
}

/// The lookup table itself. Immutable once built or loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseLut4D {
    stage: LutStage,
    dims: LutDims,
    ranges: [Range; 3],
    axes: [Vec<f64>; 4],
    values: Vec<f32>,
}

/// Statistics from one lookup call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LookupStats {
    /// Channel parameters that fell outside an axis and were clamped to it.
    pub clamped_params: usize,
    /// Pixels outside `[0,1]` clamped before lookup.
    pub clamped_pixels: usize,
}

struct CellOutcome {
    margin: Option<f64>,
}

/// Build the table for `stage` over the parameter ranges in `ranges`.
///
/// Parameter nodes whose curve fails [`crate::isp::validate_gamma`]'s criterion
/// are listed in the report; in strict mode any such node is an error.
pub fn build_inverse_lut(
    stage: LutStage,
    ranges: &ParamRanges,
    dims: LutDims,
    strict: bool,
) -> Result<(InverseLut4D, BuildReport)> {
    match stage {
        LutStage::Gamma => build_for::<GammaCurve>(ranges, dims, strict),
        LutStage::InvTone => build_for::<InvToneCurve>(ranges, dims, strict),
    }
}

fn build_for<C: LutInvertible>(
    ranges: &ParamRanges,
    dims: LutDims,
    strict: bool,
) -> Result<(InverseLut4D, BuildReport)> {
    ranges.validate()?;
    let dims = LutDims::new(dims.g1, dims.g2, dims.k, dims.input, dims.out)?;
    let axis_ranges = C::STAGE.axis_ranges(ranges);
    let g1s = linspace(axis_ranges[0].lo, axis_ranges[0].hi, dims.g1);
    let g2s = linspace(axis_ranges[1].lo, axis_ranges[1].hi, dims.g2);
    let ks = linspace(axis_ranges[2].lo, axis_ranges[2].hi, dims.k);
    let inps = linspace(0.0, 1.0, dims.input);
    let outs = linspace(0.0, 1.0, dims.out);

    let slab = dims.g2 * dims.k * dims.out;
    let mut values = vec![0f32; dims.value_count()];
    // one g1 slab per task; each slab is written by exactly one task
    let outcomes: Vec<Vec<CellOutcome>> = values
        .par_chunks_mut(slab)
        .enumerate()
        .map(|(a, slab_values)| {
            let mut out_grid = vec![0f64; dims.input];
            let mut cells = Vec::with_capacity(dims.g2 * dims.k);
            for (b, &g2) in g2s.iter().enumerate() {
                for (c, &k) in ks.iter().enumerate() {
                    let off = (b * dims.k + c) * dims.out;
                    let dst = &mut slab_values[off..off + dims.out];
                    cells.push(build_cell::<C>([g1s[a], g2, k], &inps, &outs, &mut out_grid, dst));
                }
            }
            cells
        })
        .collect();

    let mut report = BuildReport {
        invalid_cells: Vec::new(),
        min_margin: f64::INFINITY,
        max_margin: f64::NEG_INFINITY,
    };
    for (idx, cell) in outcomes.iter().flatten().enumerate() {
        match cell.margin {
            Some(m) if m >= MONOTONE_MARGIN => {
                report.min_margin = report.min_margin.min(m);
                report.max_margin = report.max_margin.max(m);
            }
            _ => report.invalid_cells.push(idx),
        }
    }
    if strict && !report.invalid_cells.is_empty() {
        return Err(Error::NonMonotoneRegion(report.invalid_cells.len()));
    }
    let lut = InverseLut4D {
        stage: C::STAGE,
        dims,
        ranges: axis_ranges,
        axes: [g1s, g2s, ks, outs],
        values,
    };
    Ok((lut, report))
}

fn build_cell<C: ToneCurve>(
    params: [f64; 3],
    inps: &[f64],
    outs: &[f64],
    out_grid: &mut [f64],
    dst: &mut [f32],
) -> CellOutcome {
    let Ok(curve) = C::from_triplet(params) else {
        // undefined curve: keep the cell as an identity ramp and flag it
        for (d, &o) in dst.iter_mut().zip(outs) {
            *d = o as f32;
        }
        return CellOutcome { margin: None };
    };
    for (o, &x) in out_grid.iter_mut().zip(inps) {
        *o = curve.eval(x);
    }
    nearest_inputs(out_grid, inps, outs, dst);
    CellOutcome {
        margin: monotone_margin(&curve, VALIDATION_GRID),
    }
}

/// For each target in `outs`, the input value whose forward image is nearest;
/// first index wins ties. `outs` must be ascending.
pub(crate) fn nearest_inputs(out_grid: &[f64], inps: &[f64], outs: &[f64], dst: &mut [f32]) {
    let increasing = out_grid.windows(2).all(|w| w[1] > w[0]);
    if increasing {
        // strictly increasing: the nearest sample is one of the two that bracket
        // the target, and the lower one wins an exact tie
        let n = out_grid.len();
        let mut p = 0;
        for (d, &t) in dst.iter_mut().zip(outs) {
            while p < n && out_grid[p] < t {
                p += 1;
            }
            let best = if p == 0 {
                0
            } else if p == n {
                n - 1
            } else if (out_grid[p - 1] - t).abs() <= (out_grid[p] - t).abs() {
                p - 1
            } else {
                p
            };
            *d = inps[best] as f32;
        }
    } else {
        for (d, &t) in dst.iter_mut().zip(outs) {
            let mut best = 0;
            let mut best_err = f64::INFINITY;
            for (i, &o) in out_grid.iter().enumerate() {
                let err = (o - t).abs();
                if err < best_err {
                    best_err = err;
                    best = i;
                }
            }
            *d = inps[best] as f32;
        }
    }
}

/// Cell index and fractional position on a regular axis, clamping to its ends.
#[inline]
fn locate(axis: &[f64], v: f64) -> (usize, f64, bool) {
    let n = axis.len();
    let (lo, hi) = (axis[0], axis[n - 1]);
    let clamped = !(v >= lo && v <= hi);
    let v = if v.is_nan() { lo } else { v.clamp(lo, hi) };
    let pos = (v - lo) / (hi - lo) * (n - 1) as f64;
    let i = (pos.floor() as usize).min(n - 2);
    let t = ((v - axis[i]) / (axis[i + 1] - axis[i])).clamp(0.0, 1.0);
    (i, t, clamped)
}

impl InverseLut4D {
    pub fn stage(&self) -> LutStage {
        self.stage
    }

    pub fn dims(&self) -> LutDims {
        self.dims
    }

    pub fn ranges(&self) -> &[Range; 3] {
        &self.ranges
    }

    /// Axes in order g1, g2, k, out.
    pub fn axes(&self) -> &[Vec<f64>; 4] {
        &self.axes
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Stored preimages for the parameter node `(a, b, c)`.
    pub fn cell(&self, a: usize, b: usize, c: usize) -> &[f32] {
        let off = ((a * self.dims.g2 + b) * self.dims.k + c) * self.dims.out;
        &self.values[off..off + self.dims.out]
    }

    /// Quadrilinear interpolation at one `(params, output level)` point.
    pub fn interpolate(&self, params: [f64; 3], y: f64) -> f64 {
        let (ia, ta, _) = locate(&self.axes[0], params[0]);
        let (ib, tb, _) = locate(&self.axes[1], params[1]);
        let (ic, tc, _) = locate(&self.axes[2], params[2]);
        let (io, to, _) = locate(&self.axes[3], y);
        let mut acc = 0.0;
        for da in 0..2 {
            let wa = if da == 0 { 1.0 - ta } else { ta };
            for db in 0..2 {
                let wb = if db == 0 { 1.0 - tb } else { tb };
                for dc in 0..2 {
                    let wc = if dc == 0 { 1.0 - tc } else { tc };
                    let cell = self.cell(ia + da, ib + db, ic + dc);
                    let w = wa * wb * wc;
                    acc += w * ((1.0 - to) * cell[io] as f64 + to * cell[io + 1] as f64);
                }
            }
        }
        acc
    }

    /// Collapse the three parameter axes at `params`, leaving the 1-D inverse
    /// curve over the output axis. Returns the curve and whether any parameter
    /// was clamped to its axis.
    pub fn curve_at(&self, params: [f64; 3]) -> (Vec<f64>, usize) {
        let (ia, ta, ca) = locate(&self.axes[0], params[0]);
        let (ib, tb, cb) = locate(&self.axes[1], params[1]);
        let (ic, tc, cc) = locate(&self.axes[2], params[2]);
        let mut curve = vec![0f64; self.dims.out];
        for da in 0..2 {
            let wa = if da == 0 { 1.0 - ta } else { ta };
            for db in 0..2 {
                let wb = if db == 0 { 1.0 - tb } else { tb };
                for dc in 0..2 {
                    let wc = if dc == 0 { 1.0 - tc } else { tc };
                    let w = wa * wb * wc;
                    if w == 0.0 {
                        continue;
                    }
                    for (acc, &v) in curve.iter_mut().zip(self.cell(ia + da, ib + db, ic + dc)) {
                        *acc += w * v as f64;
                    }
                }
            }
        }
        (curve, ca as usize + cb as usize + cc as usize)
    }

    /// Scan every cell for non-decreasing preimages along the output axis.
    pub fn is_monotone(&self) -> bool {
        self.values
            .chunks_exact(self.dims.out)
            .all(|cell| cell.windows(2).all(|w| w[1] >= w[0]))
    }

    pub fn cache_key(stage: LutStage, ranges: &ParamRanges, dims: LutDims) -> String {
        let mut h = Sha256::new();
        h.update([stage.code()]);
        for d in dims.as_array() {
            h.update((d as u64).to_le_bytes());
        }
        for r in stage.axis_ranges(ranges) {
            h.update(r.lo.to_le_bytes());
            h.update(r.hi.to_le_bytes());
        }
        let digest = h.finalize();
        format!(
            "lut-{}-{}x{}x{}x{}x{}-{}",
            stage.name(),
            dims.g1,
            dims.g2,
            dims.k,
            dims.input,
            dims.out,
            &hex::encode(digest)[..16]
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut bytes = Vec::with_capacity(4 + 1 + 20 + 48);
        bytes.extend_from_slice(LUT_MAGIC);
        bytes.push(self.stage.code());
        for d in self.dims.as_array() {
            bytes.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for r in &self.ranges {
            bytes.extend_from_slice(&r.lo.to_le_bytes());
            bytes.extend_from_slice(&r.hi.to_le_bytes());
        }
        for axis in &self.axes {
            for &v in axis {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        for chunk in self.values.chunks(1 << 16) {
            let buf: Vec<u8> = chunk.iter().flat_map(|v| v.to_le_bytes()).collect();
            w.write_all(&buf).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let corrupt = |what: &str| Error::CorruptHeader(format!("{}: {what}", path.display()));
        let mut head = [0u8; 4 + 1 + 20 + 48];
        r.read_exact(&mut head).map_err(|_| corrupt("truncated header"))?;
        if &head[..4] != LUT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let stage = LutStage::from_code(head[4]).ok_or_else(|| corrupt("unknown stage"))?;
        let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(head[o..o + 8].try_into().unwrap());
        let dims = LutDims::new(u32_at(5), u32_at(9), u32_at(13), u32_at(17), u32_at(21))
            .map_err(|_| corrupt("invalid dims"))?;
        let ranges = [0, 1, 2].map(|i| Range::new(f64_at(25 + 16 * i), f64_at(33 + 16 * i)));
        if ranges.iter().any(|r| !(r.lo.is_finite() && r.hi.is_finite() && r.lo < r.hi)) {
            return Err(corrupt("invalid axis ranges"));
        }
        let axes = [
            linspace(ranges[0].lo, ranges[0].hi, dims.g1),
            linspace(ranges[1].lo, ranges[1].hi, dims.g2),
            linspace(ranges[2].lo, ranges[2].hi, dims.k),
            linspace(0.0, 1.0, dims.out),
        ];
        let mut read_f32s = |n: usize| -> Result<Vec<f32>> {
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf).map_err(|_| corrupt("truncated payload"))?;
            Ok(buf
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect())
        };
        for axis in &axes {
            let stored = read_f32s(axis.len())?;
            if stored.iter().zip(axis).any(|(&s, &a)| s != a as f32) {
                return Err(corrupt("axes disagree with declared ranges"));
            }
        }
        let values = read_f32s(dims.value_count())?;
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(corrupt("values outside [0,1]"));
        }
        Ok(Self {
            stage,
            dims,
            ranges,
            axes,
            values,
        })
    }

    /// Load `dir/<cache key>.rfl` if present, otherwise build and store it.
    pub fn load_or_build(
        dir: impl AsRef<Path>,
        stage: LutStage,
        ranges: &ParamRanges,
        dims: LutDims,
    ) -> Result<Self> {
        let path = Self::cache_path(dir.as_ref(), stage, ranges, dims);
        if path.exists() {
            let lut = Self::load(&path)?;
            if lut.stage == stage && lut.dims == dims && lut.ranges == stage.axis_ranges(ranges) {
                return Ok(lut);
            }
            log::warn!("{} does not match its key; rebuilding", path.display());
        }
        let (lut, report) = build_inverse_lut(stage, ranges, dims, false)?;
        if !report.invalid_cells.is_empty() {
            log::warn!(
                "{} of {} {} parameter nodes fail the monotonicity check",
                report.invalid_cells.len(),
                dims.cells(),
                stage.name()
            );
        }
        std::fs::create_dir_all(dir.as_ref()).map_err(|e| Error::io(dir.as_ref(), e))?;
        // write-then-rename so concurrent readers never see a partial file
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        lut.save(&tmp)?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(lut)
    }

    pub fn cache_path(dir: &Path, stage: LutStage, ranges: &ParamRanges, dims: LutDims) -> PathBuf {
        dir.join(format!("{}.rfl", Self::cache_key(stage, ranges, dims)))
    }
}

/// Invert a tone stage through its lookup table, per channel.
pub fn apply_inverse_lut<C: LutInvertible>(
    img: &PlanarImage,
    p: &PerChannel<C>,
    lut: &InverseLut4D,
) -> Result<PlanarImage> {
    apply_inverse_lut_with_stats(img, p, lut).map(|(img, _)| img)
}

pub fn apply_inverse_lut_with_stats<C: LutInvertible>(
    img: &PlanarImage,
    p: &PerChannel<C>,
    lut: &InverseLut4D,
) -> Result<(PlanarImage, LookupStats)> {
    if lut.stage != C::STAGE {
        return Err(Error::StageMismatch {
            built: lut.stage,
            requested: C::STAGE,
        });
    }
    let mut stats = LookupStats::default();
    let mut out = img.clone();
    let scale = (lut.dims.out - 1) as f64;
    for c in 0..3 {
        let (curve, clamped) = lut.curve_at(p.channel(c).triplet());
        stats.clamped_params += clamped;
        for v in out.plane_mut(c) {
            let y = *v as f64;
            let yc = if y.is_nan() { 0.0 } else { y.clamp(0.0, 1.0) };
            if yc != y {
                stats.clamped_pixels += 1;
            }
            let pos = yc * scale;
            let j = (pos as usize).min(lut.dims.out - 2);
            let t = pos - j as f64;
            *v = ((1.0 - t) * curve[j] + t * curve[j + 1]) as f32;
        }
    }
    if stats.clamped_params > 0 {
        log::debug!("{} parameters clamped to lookup-table axes", stats.clamped_params);
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isp::GammaCurve;

    fn small_dims() -> LutDims {
        LutDims::new(8, 6, 5, 2000, 64).unwrap()
    }

    #[test]
    fn dims_parse() {
        let d: LutDims = "60,30,30,10000,512".parse().unwrap();
        assert_eq!(d, LutDims::REFERENCE);
        assert!("2,2,2,16".parse::<LutDims>().is_err());
        assert!("1,2,2,16,8".parse::<LutDims>().is_err());
        assert_eq!(d.to_string(), "60,30,30,10000,512");
    }

    #[test]
    fn linspace_endpoints_exact() {
        let g = linspace(0.5, 4.0, 60);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[59], 4.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn nearest_matches_brute_force_on_ties() {
        // exact ties between neighbors resolve to the lower index
        let inps = linspace(0.0, 1.0, 5);
        let out_grid = vec![0.0, 0.2, 0.4, 0.6, 0.8];
        let outs = vec![0.1, 0.3, 0.5, 0.9, 1.0];
        let mut fast = vec![0f32; 5];
        nearest_inputs(&out_grid, &inps, &outs, &mut fast);
        let brute: Vec<f32> = outs
            .iter()
            .map(|&t| {
                let mut best = 0;
                for i in 0..5 {
                    if (out_grid[i] - t).abs() < (out_grid[best] - t).abs() {
                        best = i;
                    }
                }
                inps[best] as f32
            })
            .collect();
        assert_eq!(fast, brute);
    }

    #[test]
    fn tiny_lut_builds() {
        let dims = LutDims::new(2, 2, 2, 16, 8).unwrap();
        let (lut, _) = build_inverse_lut(LutStage::Gamma, &ParamRanges::default(), dims, false).unwrap();
        assert_eq!(lut.values().len(), 64);
        assert!(lut.is_monotone());
    }

    #[test]
    fn identity_cell_inverts_to_identity() {
        let ranges = ParamRanges {
            g1: Range::new(0.5, 1.5),
            g2: Range::new(0.5, 1.5),
            ..ParamRanges::default()
        };
        // odd node counts put (1, 1) exactly on the grid
        let dims = LutDims::new(5, 5, 3, 1001, 33).unwrap();
        let (lut, _) = build_inverse_lut(LutStage::Gamma, &ranges, dims, false).unwrap();
        let cell = lut.cell(2, 2, 1);
        for (v, o) in cell.iter().zip(&lut.axes()[3]) {
            assert!((*v as f64 - o).abs() <= 0.5 / 1000.0 + 1e-7);
        }
    }

    #[test]
    fn stage_mismatch() {
        let (lut, _) =
            build_inverse_lut(LutStage::InvTone, &ParamRanges::default(), LutDims::new(2, 2, 2, 16, 8).unwrap(), false)
                .unwrap();
        let img = PlanarImage::filled(2, 2, 0.5).unwrap();
        let p = PerChannel::splat(GammaCurve::IDENTITY);
        assert!(matches!(apply_inverse_lut(&img, &p, &lut), Err(Error::StageMismatch { .. })));
    }

    #[test]
    fn lookup_paths_agree() {
        let (lut, _) = build_inverse_lut(LutStage::Gamma, &ParamRanges::default(), small_dims(), false).unwrap();
        let p = GammaCurve::new(2.3, 0.7, 0.35).unwrap();
        let img = PlanarImage::from_fn(16, 1, |_, x, _| x as f32 / 15.0).unwrap();
        let out = apply_inverse_lut(&img, &PerChannel::splat(p), &lut).unwrap();
        for x in 0..16 {
            let direct = lut.interpolate(p.triplet(), img.get(0, x, 0) as f64);
            assert!((out.get(0, x, 0) as f64 - direct).abs() < 1e-6);
        }
    }

    #[test]
    fn out_of_range_params_are_clamped_and_counted() {
        let (lut, _) = build_inverse_lut(LutStage::Gamma, &ParamRanges::default(), small_dims(), false).unwrap();
        let img = PlanarImage::filled(3, 3, 0.4).unwrap();
        let inside = PerChannel::splat(GammaCurve::new(4.0, 0.5, 0.5).unwrap());
        let outside = PerChannel::splat(GammaCurve::new(9.0, 0.5, 0.5).unwrap());
        let (a, sa) = apply_inverse_lut_with_stats(&img, &inside, &lut).unwrap();
        let (b, sb) = apply_inverse_lut_with_stats(&img, &outside, &lut).unwrap();
        assert_eq!(sa.clamped_params, 0);
        assert_eq!(sb.clamped_params, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ranges = ParamRanges::default();
        let (lut, _) = build_inverse_lut(LutStage::Gamma, &ranges, small_dims(), false).unwrap();
        let path = dir.path().join("a.rfl");
        lut.save(&path).unwrap();
        assert_eq!(InverseLut4D::load(&path).unwrap(), lut);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"RFL1");
        assert_eq!(bytes[4], 0);
        let expected_len = 73 + 4 * (8 + 6 + 5 + 64) + 4 * lut.values().len();
        assert_eq!(bytes.len(), expected_len);
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(InverseLut4D::load(&path), Err(Error::CorruptHeader(_))));

        let cached = InverseLut4D::load_or_build(dir.path(), LutStage::Gamma, &ranges, small_dims()).unwrap();
        assert_eq!(cached, lut);
        let again = InverseLut4D::load_or_build(dir.path(), LutStage::Gamma, &ranges, small_dims()).unwrap();
        assert_eq!(again, lut);
    }

    #[test]
    fn cache_key_depends_on_ranges() {
        let a = ParamRanges::default();
        let b = ParamRanges {
            k: Range::new(0.02, 1.0),
            ..a
        };
        let d = small_dims();
        assert_ne!(
            InverseLut4D::cache_key(LutStage::Gamma, &a, d),
            InverseLut4D::cache_key(LutStage::Gamma, &b, d)
        );
        // inverse-tone keys ignore gamma ranges
        assert_eq!(
            InverseLut4D::cache_key(LutStage::InvTone, &a, d),
            InverseLut4D::cache_key(LutStage::InvTone, &b, d)
        );
    }

    #[test]
    fn strict_mode_rejects_non_monotone_nodes() {
        let ranges = ParamRanges {
            g2: Range::new(0.5, 20.0),
            ..ParamRanges::default()
        };
        let dims = LutDims::new(3, 3, 3, 100, 16).unwrap();
        let (_, report) = build_inverse_lut(LutStage::Gamma, &ranges, dims, false).unwrap();
        assert!(!report.invalid_cells.is_empty());
        assert!(matches!(
            build_inverse_lut(LutStage::Gamma, &ranges, dims, true),
            Err(Error::NonMonotoneRegion(n)) if n == report.invalid_cells.len()
        ));
    }
}
