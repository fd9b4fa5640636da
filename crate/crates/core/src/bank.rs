//! The bank of saved ISP parameter sets and the two ways of drawing from it.
//!
//! Drawing a whole set uniformly realizes the one-to-many inverse: the same sRGB
//! image inverted under different saved sets gives RAW images as if captured in
//! different conditions. Drawing each stage independently assembles chimeric
//! sets that cover a broader domain than any single capture.
//!
//! # File format
//!
//! UTF-8 text, one JSON object per line. The first line is the header, every
//! following non-empty line one entry:
//!
//! ```text
//! {"version":1,"pipeline":"isp","ranges":{"cc":[-2,2],"px":[0,1],...}}
//! {"id":0,"cc":[1,0,0,0,1,0,0,0,1],"gain":{"r":[0.5,0.5,0.5],"g":[...],"b":[...]},"gamma":{...},"contrast":{...}}
//! ```
//!
//! Entries of an `ie` bank carry an additional `inv_tone` object. Floats are
//! written with 17 significant digits so every value survives a round trip.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isp::{
    validate_gamma, CcParams, GammaCurve, InvToneCurve, IspParamSet, KneeCurve, ParamRanges,
    PerChannel, Pipeline, Range, ToneCurve, VALIDATION_GRID,
};
use crate::rng::{stream, Purpose};

pub const BANK_VERSION: u32 = 1;

/// Ids at or above this value are reserved for chimeric per-stage draws.
pub const CHIMERA_ID_BASE: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleModeKind {
    /// Draw one saved set uniformly.
    PerSet,
    /// Draw every stage's parameters from an independently chosen saved set.
    PerFunction,
}

impl SampleModeKind {
    /// Mode for a given paired training-set size: realistic whole-set draws
    /// when fewer than 1000 pairs are available, chimeric draws otherwise.
    pub fn for_paired_size(n: usize) -> Self {
        if n < 1000 {
            SampleModeKind::PerSet
        } else {
            SampleModeKind::PerFunction
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleMode {
    pub kind: SampleModeKind,
    pub seed: u64,
}

impl SampleMode {
    pub fn per_set(seed: u64) -> Self {
        Self {
            kind: SampleModeKind::PerSet,
            seed,
        }
    }

    pub fn per_function(seed: u64) -> Self {
        Self {
            kind: SampleModeKind::PerFunction,
            seed,
        }
    }
}

/// Where a drawn set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetOrigin {
    Whole { set_id: u64 },
    PerStage {
        cc: u64,
        gain: u64,
        gamma: u64,
        contrast: u64,
        inv_tone: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawnSet {
    pub params: IspParamSet,
    pub origin: SetOrigin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBank {
    version: u32,
    pipeline: Pipeline,
    ranges: ParamRanges,
    entries: Vec<IspParamSet>,
}

impl ParamBank {
    /// Validate and assemble a bank.
    pub fn new(pipeline: Pipeline, ranges: ParamRanges, entries: Vec<IspParamSet>) -> Result<Self> {
        let bank = Self {
            version: BANK_VERSION,
            pipeline,
            ranges,
            entries,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn pipeline(&self) -> Pipeline {
        self.pipeline
    }

    pub fn ranges(&self) -> &ParamRanges {
        &self.ranges
    }

    pub fn entries(&self) -> &[IspParamSet] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&IspParamSet> {
        self.entries.iter().find(|e| e.id == id)
    }

    fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        if self.entries.is_empty() {
            return Err(Error::RangeViolation("a bank needs at least one entry".into()));
        }
        let mut ids = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !ids.insert(e.id) {
                return Err(Error::RangeViolation(format!("duplicate set id {}", e.id)));
            }
        }
        self.entries
            .par_iter()
            .try_for_each(|e| check_entry(e, self.pipeline, &self.ranges))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let header_line = loop {
            match lines.next() {
                Some((_, Ok(l))) if l.trim().is_empty() => continue,
                Some((_, Ok(l))) => break l,
                Some((_, Err(e))) => return Err(Error::io(path, e)),
                None => return Err(Error::SchemaMismatch(format!("{}: empty file", path.display()))),
            }
        };
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| Error::SchemaMismatch(format!("{}: header: {e}", path.display())))?;
        if header.version != BANK_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "{}: bank version {} is not supported (expected {BANK_VERSION})",
                path.display(),
                header.version
            )));
        }
        let mut entries = Vec::new();
        for (n, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = parse_entry_line(&line, header.pipeline)
                .map_err(|e| annotate(e, &format!("{}:{}", path.display(), n + 1)))?;
            entries.push(entry);
        }
        Self::new(header.pipeline, header.ranges, entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = Header {
            version: self.version,
            pipeline: self.pipeline,
            ranges: self.ranges,
        };
        let mut out = to_json_line(&header);
        for e in &self.entries {
            out.push_str(&format_entry_line(e));
        }
        w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Build a bank from a file of flat parameter vectors.
    pub fn from_vectors(pipeline: Pipeline, ranges: ParamRanges, source: impl AsRef<Path>) -> Result<Self> {
        let entries = read_vectors(source.as_ref(), pipeline, 0)?;
        Self::new(pipeline, ranges, entries)
    }

    /// Append the vectors in `source`, assigning ids after the current maximum.
    pub fn import_entries(&self, source: impl AsRef<Path>) -> Result<Self> {
        let next = self.entries.iter().map(|e| e.id + 1).max().unwrap_or(0);
        let mut entries = self.entries.clone();
        entries.extend(read_vectors(source.as_ref(), self.pipeline, next)?);
        Self::new(self.pipeline, self.ranges, entries)
    }

    /// Index of the whole set drawn by `(seed, draw_index)`.
    pub fn draw_index(&self, seed: u64, draw_index: u64) -> usize {
        stream(seed, Purpose::BankDraw, draw_index).random_range(0..self.entries.len())
    }

    /// Draw a parameter set. The result is a pure function of the bank,
    /// `mode` and `draw_index`.
    pub fn sample_set(&self, mode: SampleMode, draw_index: u64) -> DrawnSet {
        self.sample_set_for(mode, Purpose::BankDraw, draw_index)
    }

    /// [`ParamBank::sample_set`] on the stream reserved for `purpose`.
    pub fn sample_set_for(&self, mode: SampleMode, purpose: Purpose, draw_index: u64) -> DrawnSet {
        let mut rng = stream(mode.seed, purpose, draw_index);
        let n = self.entries.len();
        match mode.kind {
            SampleModeKind::PerSet => {
                let e = self.entries[rng.random_range(0..n)];
                DrawnSet {
                    params: e,
                    origin: SetOrigin::Whole { set_id: e.id },
                }
            }
            SampleModeKind::PerFunction => {
                let mut pick = || &self.entries[rng.random_range(0..n)];
                let (cc, gain, gamma, contrast, inv_tone) = (pick(), pick(), pick(), pick(), pick());
                let params = IspParamSet {
                    id: CHIMERA_ID_BASE | (draw_index & (CHIMERA_ID_BASE - 1)),
                    cc: cc.cc,
                    gain: gain.gain,
                    gamma: gamma.gamma,
                    contrast: contrast.contrast,
                    inv_tone: inv_tone.inv_tone,
                };
                DrawnSet {
                    params,
                    origin: SetOrigin::PerStage {
                        cc: cc.id,
                        gain: gain.id,
                        gamma: gamma.id,
                        contrast: contrast.id,
                        inv_tone: inv_tone.inv_tone.map(|_| inv_tone.id),
                    },
                }
            }
        }
    }

    /// A bank of `n` sets drawn uniformly over `ranges`.
    ///
    /// This is a synthetic stand-in for testing and demos; real banks are
    /// exported by a trained parameter encoder and ingested with
    /// [`ParamBank::from_vectors`] or [`ParamBank::load`]. Color matrices are
    /// non-negative and row-stochastic (each row sums to 1), so the forward ISP
    /// keeps `[0,1]` inputs inside `[0,1]`. Tone curves failing the monotonicity
    /// check are redrawn.
    pub fn synthetic(pipeline: Pipeline, ranges: ParamRanges, n: usize, seed: u64) -> Result<Self> {
        let entries = (0..n as u64)
            .map(|i| synthetic_set(i, pipeline, &ranges, seed))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pipeline, ranges, entries)
    }
}

fn annotate(e: Error, at: &str) -> Error {
    match e {
        Error::SchemaMismatch(m) => Error::SchemaMismatch(format!("{at}: {m}")),
        Error::LengthMismatch { .. } => e,
        other => Error::RangeViolation(format!("{at}: {other}")),
    }
}

fn check_entry(e: &IspParamSet, pipeline: Pipeline, ranges: &ParamRanges) -> Result<()> {
    if e.id >= CHIMERA_ID_BASE {
        return Err(Error::RangeViolation(format!("set id {} is reserved", e.id)));
    }
    if e.pipeline() != pipeline {
        return Err(Error::SchemaMismatch(format!(
            "set {} is for the {:?} pipeline, bank is {:?}",
            e.id,
            e.pipeline(),
            pipeline
        )));
    }
    ranges.check(e)?;
    if !validate_gamma(&e.gamma, VALIDATION_GRID) {
        return Err(Error::RangeViolation(format!(
            "set {}: gamma curve is not strictly increasing",
            e.id
        )));
    }
    if let Some(it) = &e.inv_tone {
        if !validate_gamma(it, VALIDATION_GRID) {
            return Err(Error::RangeViolation(format!(
                "set {}: inverse tone curve is not strictly increasing",
                e.id
            )));
        }
    }
    Ok(())
}

fn read_vectors(path: &Path, pipeline: Pipeline, first_id: u64) -> Result<Vec<IspParamSet>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let values = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::SchemaMismatch(format!("{}:{}: {e}", path.display(), n + 1)))?;
        let id = first_id + out.len() as u64;
        let set = IspParamSet::from_vector(id, pipeline, &values)
            .map_err(|e| annotate(e, &format!("{}:{}", path.display(), n + 1)))?;
        out.push(set);
    }
    Ok(out)
}

fn synthetic_set(id: u64, pipeline: Pipeline, ranges: &ParamRanges, seed: u64) -> Result<IspParamSet> {
    let mut rng = stream(seed, Purpose::Synthetic, id);
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        let mut off = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            if i != j {
                *v = 0.25 * rng.random::<f64>();
                off += *v;
            }
        }
        row[i] = 1.0 - off;
    }
    let cc = CcParams::new(m)?;
    let knee_ranges = [ranges.px, ranges.pw, ranges.ph];
    let knee = |t: [f64; 3]| KneeCurve::new(t[0], t[1], t[2]).ok();
    let gain = draw_channels(&mut rng, knee_ranges, knee)?;
    let gamma = draw_channels(&mut rng, [ranges.g1, ranges.g2, ranges.k], monotone::<GammaCurve>)?;
    let contrast = draw_channels(&mut rng, knee_ranges, knee)?;
    let inv_tone = match pipeline {
        Pipeline::Isp => None,
        Pipeline::Ie => Some(draw_channels(
            &mut rng,
            [ranges.g3, ranges.g4, ranges.k2],
            monotone::<InvToneCurve>,
        )?),
    };
    Ok(IspParamSet {
        id,
        cc,
        gain,
        gamma,
        contrast,
        inv_tone,
    })
}

fn monotone<C: ToneCurve>(t: [f64; 3]) -> Option<C> {
    C::from_triplet(t)
        .ok()
        .filter(|c| validate_gamma(&PerChannel::splat(*c), VALIDATION_GRID))
}

/// Three curves uniform over `r`, redrawing any that `make` rejects.
fn draw_channels<C>(rng: &mut impl Rng, r: [Range; 3], make: impl Fn([f64; 3]) -> Option<C>) -> Result<PerChannel<C>> {
    let mut one = || -> Result<C> {
        for _ in 0..10_000 {
            if let Some(c) = make([0, 1, 2].map(|i| r[i].lo + r[i].span() * rng.random::<f64>())) {
                return Ok(c);
            }
        }
        Err(Error::RangeViolation("ranges admit no valid curve".into()))
    };
    Ok(PerChannel([one()?, one()?, one()?]))
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    pipeline: Pipeline,
    ranges: ParamRanges,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Triplets {
    r: [f64; 3],
    g: [f64; 3],
    b: [f64; 3],
}

impl Triplets {
    fn of<T>(p: &PerChannel<T>, f: impl Fn(&T) -> [f64; 3]) -> Self {
        Self {
            r: f(&p.0[0]),
            g: f(&p.0[1]),
            b: f(&p.0[2]),
        }
    }

    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.r.iter().chain(&self.g).chain(&self.b).copied()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryWire {
    id: u64,
    cc: [f64; 9],
    gain: Triplets,
    gamma: Triplets,
    contrast: Triplets,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inv_tone: Option<Triplets>,
}

/// Parse one entry line (the bank-file entry format).
pub fn parse_entry_line(line: &str, pipeline: Pipeline) -> Result<IspParamSet> {
    let w: EntryWire = serde_json::from_str(line.trim())
        .map_err(|e| Error::SchemaMismatch(format!("entry: {e}")))?;
    let entry_pipeline = if w.inv_tone.is_some() {
        Pipeline::Ie
    } else {
        Pipeline::Isp
    };
    if entry_pipeline != pipeline {
        return Err(Error::SchemaMismatch(format!(
            "entry {} is for the {entry_pipeline:?} pipeline, expected {pipeline:?}",
            w.id
        )));
    }
    let mut v: Vec<f64> = w.cc.to_vec();
    v.extend(w.gain.flat());
    v.extend(w.gamma.flat());
    v.extend(w.contrast.flat());
    if let Some(it) = &w.inv_tone {
        v.extend(it.flat());
    }
    IspParamSet::from_vector(w.id, pipeline, &v)
}

/// Serialize one entry as a newline-terminated line.
pub fn format_entry_line(p: &IspParamSet) -> String {
    let w = EntryWire {
        id: p.id,
        cc: p.cc.row_major(),
        gain: Triplets::of(&p.gain, |k| k.triplet()),
        gamma: Triplets::of(&p.gamma, |g| g.triplet()),
        contrast: Triplets::of(&p.contrast, |k| k.triplet()),
        inv_tone: p.inv_tone.as_ref().map(|it| Triplets::of(it, |g| g.triplet())),
    };
    to_json_line(&w)
}

fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("json is utf-8")
}

/// JSON formatter writing floats like C's `%.17g`.
struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(format_sig17(value).as_bytes())
    }
}

/// `value` with 17 significant digits, trailing zeros removed, exponent form
/// outside `[1e-4, 1e17)`.
pub fn format_sig17(value: f64) -> String {
    if value == 0.0 {
        return if value.is_sign_negative() { "-0" } else { "0" }.to_string();
    }
    let sci = format!("{value:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..17).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{value:.*}", (16 - exp) as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn sig17_matches_printf() {
        assert_eq!(format_sig17(0.5), "0.5");
        assert_eq!(format_sig17(0.1), "0.10000000000000001");
        assert_eq!(format_sig17(1.0), "1");
        assert_eq!(format_sig17(-2.0), "-2");
        assert_eq!(format_sig17(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_sig17(123456.75), "123456.75");
        assert_eq!(format_sig17(1e20), "1e+20");
        assert_eq!(format_sig17(0.0001), "0.0001");
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 6.02214076e23, -0.0] {
            assert_eq!(format_sig17(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for pipeline in [Pipeline::Isp, Pipeline::Ie] {
            let bank = ParamBank::synthetic(pipeline, ParamRanges::default(), 12, 5).unwrap();
            let path = dir.path().join("bank.txt");
            bank.save(&path).unwrap();
            let back = ParamBank::load(&path).unwrap();
            assert_eq!(back, bank);
            let text = std::fs::read_to_string(&path).unwrap();
            assert_eq!(text.lines().count(), 13);
            assert!(text.starts_with("{\"version\":1,"));
        }
    }

    #[test]
    fn single_entry_bank() {
        let dir = tempfile::tempdir().unwrap();
        let bank = ParamBank::new(Pipeline::Isp, ParamRanges::default(), vec![IspParamSet::identity(0, Pipeline::Isp)]).unwrap();
        let path = dir.path().join("b.txt");
        bank.save(&path).unwrap();
        let back = ParamBank::load(&path).unwrap();
        assert_eq!(back.len(), 1);
        for kind in [SampleModeKind::PerSet, SampleModeKind::PerFunction] {
            for d in 0..5 {
                let s = back.sample_set(SampleMode { kind, seed: 3 }, d);
                let mut p = s.params;
                p.id = 0;
                assert_eq!(p, back.entries()[0]);
            }
        }
    }

    #[test]
    fn empty_bank_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ParamBank::new(Pipeline::Isp, ParamRanges::default(), vec![]),
            Err(Error::RangeViolation(_))
        ));
        let path = write(
            dir.path(),
            "b.txt",
            &to_json_line(&Header {
                version: 1,
                pipeline: Pipeline::Isp,
                ranges: ParamRanges::default(),
            }),
        );
        assert!(matches!(ParamBank::load(&path), Err(Error::RangeViolation(_))));
    }

    #[test]
    fn unsupported_version_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let bank = ParamBank::synthetic(Pipeline::Isp, ParamRanges::default(), 2, 1).unwrap();
        let path = dir.path().join("b.txt");
        bank.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen("\"version\":1", "\"version\":7", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(ParamBank::load(&path), Err(Error::SchemaMismatch(_))));
        let path = write(dir.path(), "c.txt", "not json\n");
        assert!(matches!(ParamBank::load(&path), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn out_of_range_entry_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = IspParamSet::identity(0, Pipeline::Isp);
        p.gamma.0[2].k = 1.5;
        let mut body = to_json_line(&Header {
            version: 1,
            pipeline: Pipeline::Isp,
            ranges: ParamRanges::default(),
        });
        body.push_str(&format_entry_line(&p));
        let path = write(dir.path(), "b.txt", &body);
        let err = ParamBank::load(&path).unwrap_err();
        assert!(matches!(err, Error::RangeViolation(_)), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let e = IspParamSet::identity(1, Pipeline::Isp);
        assert!(ParamBank::new(Pipeline::Isp, ParamRanges::default(), vec![e, e]).is_err());
    }

    #[test]
    fn import_vectors() {
        let dir = tempfile::tempdir().unwrap();
        let id = IspParamSet::identity(0, Pipeline::Isp).to_vector();
        let line = id.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ");
        let path = write(dir.path(), "v.txt", &format!("# exported sets\n{line}\n\n{line}\n"));
        let bank = ParamBank::from_vectors(Pipeline::Isp, ParamRanges::default(), &path).unwrap();
        assert_eq!(bank.len(), 2);
        assert_eq!(bank.entries()[1], IspParamSet::identity(1, Pipeline::Isp));
        let grown = bank.import_entries(&path).unwrap();
        assert_eq!(grown.entries().iter().map(|e| e.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);

        let short = write(dir.path(), "s.txt", "1 0 0 0 1 0 0 0 1\n");
        assert!(matches!(
            ParamBank::from_vectors(Pipeline::Isp, ParamRanges::default(), &short),
            Err(Error::LengthMismatch { expected: 36, found: 9 })
        ));
        let mut bad = id.clone();
        bad[20] = 9.0; // gamma g channel, g2 out of range
        let line = bad.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        let oob = write(dir.path(), "o.txt", &line);
        assert!(matches!(
            ParamBank::from_vectors(Pipeline::Isp, ParamRanges::default(), &oob),
            Err(Error::RangeViolation(_))
        ));
    }

    #[test]
    fn sampling_is_counter_addressed() {
        let bank = ParamBank::synthetic(Pipeline::Ie, ParamRanges::default(), 16, 9).unwrap();
        let mode = SampleMode::per_function(42);
        let forward: Vec<_> = (0..20).map(|d| bank.sample_set(mode, d)).collect();
        let backward: Vec<_> = (0..20).rev().map(|d| bank.sample_set(mode, d)).collect();
        assert!(forward.iter().eq(backward.iter().rev()));
        let distinct: HashSet<u64> = (0..50)
            .map(|d| match bank.sample_set(SampleMode::per_set(1), d).origin {
                SetOrigin::Whole { set_id } => set_id,
                _ => unreachable!(),
            })
            .collect();
        assert!(distinct.len() > 5);
    }

    #[test]
    fn per_function_on_uniform_bank_matches_per_set() {
        let base = ParamBank::synthetic(Pipeline::Isp, ParamRanges::default(), 1, 2).unwrap().entries()[0];
        let entries = (0..8).map(|i| IspParamSet { id: i, ..base }).collect();
        let bank = ParamBank::new(Pipeline::Isp, ParamRanges::default(), entries).unwrap();
        for d in 0..10 {
            let a = bank.sample_set(SampleMode::per_set(5), d).params;
            let mut b = bank.sample_set(SampleMode::per_function(5), d).params;
            assert!(b.id >= CHIMERA_ID_BASE);
            b.id = a.id;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mode_policy() {
        assert_eq!(SampleModeKind::for_paired_size(100), SampleModeKind::PerSet);
        assert_eq!(SampleModeKind::for_paired_size(999), SampleModeKind::PerSet);
        assert_eq!(SampleModeKind::for_paired_size(1000), SampleModeKind::PerFunction);
    }

    #[test]
    fn entry_line_round_trip_and_pipeline_check() {
        let p = ParamBank::synthetic(Pipeline::Ie, ParamRanges::default(), 1, 4).unwrap().entries()[0];
        let line = format_entry_line(&p);
        assert_eq!(parse_entry_line(&line, Pipeline::Ie).unwrap(), p);
        assert!(matches!(parse_entry_line(&line, Pipeline::Isp), Err(Error::SchemaMismatch(_))));
    }
}
