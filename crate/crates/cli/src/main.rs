//! `pseudoraw`: build inverse lookup tables, generate pseudo-RAW datasets,
//! synthesize noise, simulate batch filtering and manage parameter banks.
//!
//! Exit codes: 0 success, 1 runtime or validation failure, 2 usage error.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pseudoraw_core::bank::{ParamBank, SampleModeKind};
use pseudoraw_core::filter::{filter_batch, BatchLosses, FilterConfig};
use pseudoraw_core::imaging::{load_image, save_image, BitDepthHint, PlanarImage, SaveFormat};
use pseudoraw_core::inverse::{
    apply_inverse_lut, build_inverse_lut, sweep_round_trip, InverseLut4D, LutDims, LutSet, LutStage,
};
use pseudoraw_core::isp::{GammaCurve, InvToneCurve, PerChannel, ToneCurve};
use pseudoraw_core::pseudo::{
    add_noise, generate_dataset, list_sources, DatasetConfig, ExternalPredictor, NoiseParams, Predictor,
    StatVector, Task, MANIFEST_NAME,
};
use pseudoraw_core::{IspParamSet, ParamRanges, Pipeline};

#[derive(Parser)]
#[command(name = "pseudoraw", version, about = "Invertible ISP and pseudo-RAW data generation")]
struct Cli {
    /// Seed for every random decision (default: drawn from the OS and echoed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inverse lookup tables.
    #[command(subcommand)]
    Lut(LutCommand),
    /// Measure the round-trip error and lookup latency of an inverse table.
    InvertCheck(InvertCheckArgs),
    /// Invert every sRGB image in a directory into pseudo-RAW images.
    RawGen(RawGenArgs),
    /// Quality-update every sRGB image in a directory into (pseudo-RAW, sRGB) pairs.
    QualityUpdate(QualityUpdateArgs),
    /// Add sensor noise to RAW images.
    AddNoise(AddNoiseArgs),
    /// Loss-based pseudo-data filtering.
    #[command(subcommand)]
    Filter(FilterCommand),
    /// Parameter banks.
    #[command(subcommand)]
    Bank(BankCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Gamma,
    InvTone,
}

impl From<StageArg> for LutStage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Gamma => LutStage::Gamma,
            StageArg::InvTone => LutStage::InvTone,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Isp,
    Ie,
}

impl From<PipelineArg> for Pipeline {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::Isp => Pipeline::Isp,
            PipelineArg::Ie => Pipeline::Ie,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PerSet,
    PerFunction,
}

impl From<ModeArg> for SampleModeKind {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PerSet => SampleModeKind::PerSet,
            ModeArg::PerFunction => SampleModeKind::PerFunction,
        }
    }
}

#[derive(Args)]
struct LutArgs {
    /// Grid sizes g1,g2,k,input,output.
    #[arg(long, default_value_t = LutDims::REFERENCE)]
    dims: LutDims,
    /// JSON file with parameter ranges (default ranges otherwise).
    #[arg(long)]
    ranges: Option<PathBuf>,
    /// Directory of cached tables.
    #[arg(long, default_value = "lut-cache")]
    cache_dir: PathBuf,
}

impl LutArgs {
    fn ranges(&self) -> Result<ParamRanges> {
        load_ranges(self.ranges.as_deref())
    }
}

#[derive(Subcommand)]
enum LutCommand {
    /// Build a table and write it to the cache (or to --out).
    Build {
        #[arg(long)]
        stage: StageArg,
        #[command(flatten)]
        lut: LutArgs,
        /// Fail if any parameter node has a curve that is not strictly increasing.
        #[arg(long)]
        strict: bool,
        /// Write the table here instead of the cache directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InvertCheckArgs {
    #[arg(long, default_value = "gamma")]
    stage: StageArg,
    #[command(flatten)]
    lut: LutArgs,
    /// Random parameter triples in the sweep.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    /// Random pixel values per parameter triple.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pixels: u64,
    /// Largest acceptable mean round-trip error.
    #[arg(long, default_value_t = 2.2e-5)]
    max_mean: f64,
    /// Largest acceptable single round-trip error.
    #[arg(long, default_value_t = 1.3e-4)]
    max_error: f64,
}

#[derive(Args)]
struct DatasetArgs {
    /// Parameter bank file.
    #[arg(long)]
    bank: PathBuf,
    /// Number of outputs; sources are cycled (default: one per source).
    #[arg(long)]
    count: Option<usize>,
    /// Add noise with per-image random levels to every pseudo-RAW.
    #[arg(long)]
    noise: bool,
    /// Inverse table grid sizes g1,g2,k,input,output.
    #[arg(long, default_value_t = LutDims::REFERENCE)]
    lut_dims: LutDims,
    #[arg(long, default_value = "lut-cache")]
    cache_dir: PathBuf,
    /// Directory of sRGB images (png or float container).
    src: PathBuf,
    out: PathBuf,
}

#[derive(Args)]
struct RawGenArgs {
    #[arg(long, default_value = "per-set")]
    mode: ModeArg,
    #[command(flatten)]
    data: DatasetArgs,
}

#[derive(Args)]
struct QualityUpdateArgs {
    /// `fixed:<set id>`, `stat:<reference sRGB image>` or `external:<command with {input}>`.
    #[arg(long)]
    predictor: String,
    /// Sampling mode of the final inversion.
    #[arg(long, conflicts_with = "paired_size")]
    mode: Option<ModeArg>,
    /// Size of the real paired set; picks per-set below 1000 pairs, per-function otherwise.
    #[arg(long)]
    paired_size: Option<usize>,
    /// Maximum simultaneous external predictor processes.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    external_concurrency: u64,
    #[command(flatten)]
    data: DatasetArgs,
}

#[derive(Args)]
struct AddNoiseArgs {
    /// Signal-dependent variance coefficient (default: drawn per image).
    #[arg(long, requires = "sigma_r_sq")]
    sigma_s_sq: Option<f64>,
    /// Variance floor (default: drawn per image).
    #[arg(long, requires = "sigma_s_sq")]
    sigma_r_sq: Option<f64>,
    /// Clamp the result to [0,1].
    #[arg(long)]
    clip: bool,
    /// RAW image file or directory of images.
    input: PathBuf,
    out: PathBuf,
}

#[derive(Subcommand)]
enum FilterCommand {
    /// Filter every batch in a loss file and print one JSON report per batch.
    Sim {
        #[arg(long)]
        beta: f64,
        /// Expected real samples per batch (default: taken from each line).
        #[arg(long)]
        n_real: Option<usize>,
        /// Expected pseudo samples per batch (default: taken from each line).
        #[arg(long)]
        n_pseudo: Option<usize>,
        /// One batch per line: {"real":[...],"pseudo":[...]}.
        losses: PathBuf,
    },
}

#[derive(Subcommand)]
enum BankCommand {
    /// Create or extend a bank from a file of flat parameter vectors.
    Import {
        #[arg(long)]
        pipeline: PipelineArg,
        #[arg(long)]
        ranges: Option<PathBuf>,
        /// Existing bank to extend.
        #[arg(long)]
        into: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        vectors: PathBuf,
    },
    /// Print a summary of a bank.
    Inspect { bank: PathBuf },
    /// Write a synthetic bank drawn uniformly over the ranges (for testing only).
    Synth {
        #[arg(long)]
        pipeline: PipelineArg,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long)]
        ranges: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn seed(cli_seed: Option<u64>) -> u64 {
    let s = cli_seed.unwrap_or_else(rand::random);
    eprintln!("seed: {s}");
    s
}

fn load_ranges(path: Option<&Path>) -> Result<ParamRanges> {
    let Some(path) = path else {
        return Ok(ParamRanges::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let ranges: ParamRanges = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ranges.validate()?;
    Ok(ranges)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Lut(LutCommand::Build {
            stage,
            lut,
            strict,
            out,
        }) => lut_build(stage.into(), &lut, strict, out),
        Command::InvertCheck(args) => invert_check(&args, seed(cli.seed)),
        Command::RawGen(args) => {
            let bank = ParamBank::load(&args.data.bank)?;
            let cfg = dataset_config(&args.data, args.mode.into(), seed(cli.seed), 1);
            dataset(&args.data, &bank, Task::SrgbToRaw, &cfg)
        }
        Command::QualityUpdate(args) => {
            let bank = ParamBank::load(&args.data.bank)?;
            let seed = seed(cli.seed);
            let predictor = parse_predictor(&args.predictor, &bank, seed)?;
            let mode = match (args.mode, args.paired_size) {
                (Some(m), _) => m.into(),
                (None, Some(n)) => SampleModeKind::for_paired_size(n),
                (None, None) => SampleModeKind::PerSet,
            };
            let cfg = dataset_config(&args.data, mode, seed, args.external_concurrency as usize);
            dataset(&args.data, &bank, Task::QualityUpdate(&predictor), &cfg)
        }
        Command::AddNoise(args) => noise(&args, seed(cli.seed)),
        Command::Filter(FilterCommand::Sim {
            beta,
            n_real,
            n_pseudo,
            losses,
        }) => filter_sim(beta, n_real, n_pseudo, &losses),
        Command::Bank(cmd) => bank(cmd, cli.seed),
    }
}

fn lut_build(stage: LutStage, args: &LutArgs, strict: bool, out: Option<PathBuf>) -> Result<ExitCode> {
    let ranges = args.ranges()?;
    let start = Instant::now();
    let (lut, report) = build_inverse_lut(stage, &ranges, args.dims, strict)?;
    let elapsed = start.elapsed();
    let path = match out {
        Some(p) => p,
        None => {
            std::fs::create_dir_all(&args.cache_dir)
                .with_context(|| format!("creating {}", args.cache_dir.display()))?;
            InverseLut4D::cache_path(&args.cache_dir, stage, &ranges, args.dims)
        }
    };
    lut.save(&path)?;
    println!("stage: {}", stage.name());
    println!("dims: {}", args.dims);
    println!("invalid nodes: {} of {}", report.invalid_cells.len(), args.dims.cells());
    println!("margin: min {:e} max {:e}", report.min_margin, report.max_margin);
    println!("build time: {:.3} s", elapsed.as_secs_f64());
    println!("path: {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn invert_check(args: &InvertCheckArgs, seed: u64) -> Result<ExitCode> {
    let stage: LutStage = args.stage.into();
    let ranges = args.lut.ranges()?;
    let lut = InverseLut4D::load_or_build(&args.lut.cache_dir, stage, &ranges, args.lut.dims)?;
    let report = sweep_round_trip(&lut, args.samples as usize, args.pixels as usize, seed);
    let latency_ms = lookup_latency_ms(&lut)?;
    let pass = report.mean <= args.max_mean && report.max <= args.max_error;
    let out = serde_json::json!({
        "stage": stage.name(),
        "dims": args.lut.dims.to_string(),
        "param_sets": report.param_sets,
        "pixels": report.pixels,
        "mean": report.mean,
        "max": report.max,
        "max_mean": args.max_mean,
        "max_error": args.max_error,
        "lookup_ms_640x480": latency_ms,
        "pass": pass,
    });
    println!("{out}");
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// Median wall time of inverting one 640×480 image through `lut`.
fn lookup_latency_ms(lut: &InverseLut4D) -> Result<f64> {
    let img = PlanarImage::from_fn(640, 480, |c, x, y| ((x * 7 + y * 13 + c * 101) % 1000) as f32 / 999.0)?;
    let mid = lut.ranges().map(|r| 0.5 * (r.lo + r.hi));
    let mut times = Vec::new();
    for _ in 0..5 {
        let start = Instant::now();
        match lut.stage() {
            LutStage::Gamma => {
                apply_inverse_lut(&img, &PerChannel::splat(GammaCurve::from_triplet(mid)?), lut)?;
            }
            LutStage::InvTone => {
                apply_inverse_lut(&img, &PerChannel::splat(InvToneCurve::from_triplet(mid)?), lut)?;
            }
        }
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

fn dataset_config(args: &DatasetArgs, mode: SampleModeKind, seed: u64, external: usize) -> DatasetConfig {
    DatasetConfig {
        mode,
        seed,
        noise: args.noise,
        count: args.count,
        external_concurrency: external,
    }
}

fn dataset(args: &DatasetArgs, bank: &ParamBank, task: Task<'_>, cfg: &DatasetConfig) -> Result<ExitCode> {
    let luts = LutSet::load_or_build(&args.cache_dir, bank.pipeline(), bank.ranges(), args.lut_dims)?;
    let start = Instant::now();
    let manifest = generate_dataset(&args.src, &args.out, bank, &luts, task, cfg)?;
    eprintln!(
        "{} pairs, {} errors in {:.1} s; manifest {}",
        manifest.header.pairs,
        manifest.header.errors,
        start.elapsed().as_secs_f64(),
        args.out.join(MANIFEST_NAME).display()
    );
    Ok(if manifest.header.errors == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn parse_predictor(spec: &str, bank: &ParamBank, seed: u64) -> Result<Predictor> {
    let (kind, arg) = spec
        .split_once(':')
        .context("predictor must look like fixed:<id>, stat:<image> or external:<command>")?;
    Ok(match kind {
        "fixed" => {
            let id: u64 = arg.parse().with_context(|| format!("bad set id {arg:?}"))?;
            Predictor::Fixed(*bank.get(id).with_context(|| format!("bank has no set {id}"))?)
        }
        "stat" => Predictor::stat_match(StatVector::of(&load_image(arg, BitDepthHint::Auto)?), seed),
        "external" => Predictor::External(ExternalPredictor::parse(arg)?),
        other => bail!("unknown predictor kind {other:?}"),
    })
}

fn noise(args: &AddNoiseArgs, seed: u64) -> Result<ExitCode> {
    let inputs = if args.input.is_dir() {
        list_sources(&args.input)?
    } else {
        vec![args.input.clone()]
    };
    let fixed = match (args.sigma_s_sq, args.sigma_r_sq) {
        (Some(s), Some(r)) => Some(NoiseParams::new(s, r)?),
        _ => None,
    };
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let manifest_path = args.out.join(MANIFEST_NAME);
    let mut manifest = BufWriter::new(File::create(&manifest_path)?);
    writeln!(
        manifest,
        "{}",
        serde_json::json!({"kind": "run", "task": "add_noise", "seed": seed, "clip": args.clip, "sources": inputs.len()})
    )?;
    let mut errors = 0;
    for (k, src) in inputs.iter().enumerate() {
        let k = k as u64;
        let np = fixed.unwrap_or_else(|| NoiseParams::draw(seed, k));
        let stem = src.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let out = args.out.join(format!("{stem}_noisy.rft"));
        let result = load_image(src, BitDepthHint::Auto)
            .and_then(|raw| save_image(&add_noise(&raw, np, seed, k, args.clip), &out, SaveFormat::F32));
        let line = match result {
            Ok(()) => serde_json::json!({
                "src": src.display().to_string(),
                "out": out.file_name().map(|n| n.to_string_lossy().into_owned()),
                "noise": {"sigma_s_sq": np.sigma_s_sq, "sigma_r_sq": np.sigma_r_sq, "noise_draw": k},
            }),
            Err(e) => {
                errors += 1;
                log::warn!("{}: {e}", src.display());
                serde_json::json!({"src": src.display().to_string(), "error": e.to_string()})
            }
        };
        writeln!(manifest, "{line}")?;
    }
    manifest.flush()?;
    eprintln!("{} images, {errors} errors; manifest {}", inputs.len(), manifest_path.display());
    Ok(if errors == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn filter_sim(beta: f64, n_real: Option<usize>, n_pseudo: Option<usize>, path: &Path) -> Result<ExitCode> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let batch: BatchLosses =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        let cfg = FilterConfig::new(
            beta,
            n_real.unwrap_or(batch.real.len()),
            n_pseudo.unwrap_or(batch.pseudo.len()),
        )?;
        let report = filter_batch(&batch, &cfg).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        writeln!(out, "{}", serde_json::to_string(&report)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn bank(cmd: BankCommand, cli_seed: Option<u64>) -> Result<ExitCode> {
    match cmd {
        BankCommand::Import {
            pipeline,
            ranges,
            into,
            out,
            vectors,
        } => {
            let bank = match into {
                Some(existing) => {
                    let bank = ParamBank::load(&existing)?;
                    if bank.pipeline() != Pipeline::from(pipeline) {
                        bail!("{} is a {:?} bank", existing.display(), bank.pipeline());
                    }
                    bank.import_entries(&vectors)?
                }
                None => ParamBank::from_vectors(pipeline.into(), load_ranges(ranges.as_deref())?, &vectors)?,
            };
            bank.save(&out)?;
            eprintln!("{} entries written to {}", bank.len(), out.display());
        }
        BankCommand::Inspect { bank } => inspect(&ParamBank::load(&bank)?),
        BankCommand::Synth {
            pipeline,
            count,
            ranges,
            out,
        } => {
            let bank = ParamBank::synthetic(
                pipeline.into(),
                load_ranges(ranges.as_deref())?,
                count as usize,
                seed(cli_seed),
            )?;
            bank.save(&out)?;
            eprintln!("{} synthetic entries written to {}", bank.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn inspect(bank: &ParamBank) {
    println!("version: {}", bank.version());
    println!("pipeline: {:?}", bank.pipeline());
    println!("entries: {}", bank.len());
    let r = bank.ranges();
    let e = bank.entries();
    let observed = |f: &dyn Fn(&IspParamSet) -> Vec<f64>| {
        let v: Vec<f64> = e.iter().flat_map(f).collect();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let knees = |i: usize| {
        move |p: &IspParamSet| p.gain.iter().chain(p.contrast.iter()).map(|k| k.triplet()[i]).collect::<Vec<_>>()
    };
    let mut rows: Vec<(&str, [f64; 2], (f64, f64))> = vec![
        ("cc", [r.cc.lo, r.cc.hi], observed(&|p| p.cc.row_major().to_vec())),
        ("px", [r.px.lo, r.px.hi], observed(&knees(0))),
        ("pw", [r.pw.lo, r.pw.hi], observed(&knees(1))),
        ("ph", [r.ph.lo, r.ph.hi], observed(&knees(2))),
        ("g1", [r.g1.lo, r.g1.hi], observed(&|p| p.gamma.iter().map(|g| g.g1).collect())),
        ("g2", [r.g2.lo, r.g2.hi], observed(&|p| p.gamma.iter().map(|g| g.g2).collect())),
        ("k", [r.k.lo, r.k.hi], observed(&|p| p.gamma.iter().map(|g| g.k).collect())),
    ];
    if bank.pipeline() == Pipeline::Ie {
        let it = |i: usize| move |p: &IspParamSet| {
            p.inv_tone.iter().flat_map(|c| c.iter().map(move |t| t.triplet()[i])).collect::<Vec<_>>()
        };
        rows.push(("g3", [r.g3.lo, r.g3.hi], observed(&it(0))));
        rows.push(("g4", [r.g4.lo, r.g4.hi], observed(&it(1))));
        rows.push(("k2", [r.k2.lo, r.k2.hi], observed(&it(2))));
    }
    println!("ranges (declared / observed in entries):");
    for (name, d, o) in rows {
        println!("  {name:<3} [{}, {}]  [{:.4}, {:.4}]", d[0], d[1], o.0, o.1);
    }
}
