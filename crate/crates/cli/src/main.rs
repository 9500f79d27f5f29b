//! `vidseg`: streaming supervoxels, motion layers, flow, metrics and
//! synthetic scenes from the command line.
//!
//! Exit status is 0 on success, 1 on usage or configuration errors and 2 on
//! data or format errors.

mod settings;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vidseg_core::media_io::{
    colorize_labels, encode_pgm16, ensure_dir, load_frame_sequence, read_label_volume, write_flow,
    write_frame_sequence, write_label_volume, write_ppm,
};
use vidseg_core::metrics::{evaluate_levels, metrics_csv, DEFAULT_TOLERANCE};
use vidseg_core::motionlayers::{tau_schedule, DivergenceParams, MotionParams, RansacParams};
use vidseg_core::optflow::{flow_file_name, flow_for_sequence, FlowParams};
use vidseg_core::pipeline::{motion_video, segment_video, SegmentSettings};
use vidseg_core::preprocess::{bilateral_filter_sequence, BilateralParams};
use vidseg_core::streamseg::StreamConfig;
use vidseg_core::synth::{generate, SceneSpec};
use vidseg_core::{FrameSequence, LabelVolume};

use settings::{GridSize, Resolver, Switch};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] vidseg_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "vidseg", version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("CARGO_PKG_NAME"), ")"), about)]
struct Cli {
    /// Worker threads (defaults to all cores); results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice (RANSAC, palettes, synthetic noise).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` file with option defaults; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hierarchical streaming supervoxels.
    Segment(SegmentArgs),
    /// Affine motion layers on top of supervoxels.
    Motion(MotionArgs),
    /// Backward optical flow written as .flo files.
    Flow(FlowArgs),
    /// Benchmark metrics of predicted levels against ground truth.
    Eval(EvalArgs),
    /// Synthetic video with ground-truth labels and flow.
    Synth(SynthArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Frame path pattern with one printf-style integer, e.g. `frames/%05d.ppm`.
    #[arg(long)]
    input: Option<String>,
    /// Index of the first frame.
    #[arg(long)]
    first: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct PreArgs {
    #[arg(long, value_name = "on|off")]
    bilateral: Option<Switch>,
    #[arg(long)]
    sigma_s: Option<f64>,
    #[arg(long)]
    sigma_r: Option<f64>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    flow_alpha: Option<f64>,
    #[arg(long)]
    flow_pyramid_scale: Option<f64>,
    #[arg(long)]
    flow_min_size: Option<usize>,
    #[arg(long)]
    flow_iters: Option<usize>,
    #[arg(long)]
    flow_warps: Option<usize>,
}

#[derive(Args)]
struct StreamArgs {
    /// Number of hierarchy levels.
    #[arg(long)]
    levels: Option<usize>,
    /// Frames per streaming window.
    #[arg(long)]
    subseq: Option<usize>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    k_growth: Option<f64>,
    #[arg(long)]
    min_size: Option<usize>,
    #[arg(long)]
    color_bins: Option<usize>,
    #[arg(long)]
    flow_bins: Option<usize>,
    #[arg(long)]
    flow_range: Option<f64>,
    #[arg(long, value_name = "on|off")]
    flow_edges: Option<Switch>,
    #[arg(long, value_name = "on|off")]
    flow_feature: Option<Switch>,
    /// Directory of `NNNNN.flo` backward flow files used instead of computing flow.
    #[arg(long)]
    external_flow: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    io: InputArgs,
    #[command(flatten)]
    pre: PreArgs,
    #[command(flatten)]
    stream: StreamArgs,
}

#[derive(Args)]
struct MotionArgs {
    #[command(flatten)]
    io: InputArgs,
    #[command(flatten)]
    pre: PreArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Supervoxel level seeding the motion regions.
    #[arg(long)]
    supervoxel_level: Option<usize>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    tau_growth: Option<f64>,
    /// Number of merge levels above the initial regions.
    #[arg(long)]
    motion_levels: Option<usize>,
    /// Canonical grid, `<p>x<q>`.
    #[arg(long)]
    canonical: Option<GridSize>,
    #[arg(long, value_name = "on|off")]
    mrf: Option<Switch>,
    #[arg(long)]
    mrf_lambda: Option<f64>,
    #[arg(long)]
    ransac_iters: Option<usize>,
    #[arg(long)]
    ransac_tol: Option<f64>,
}

#[derive(Args)]
struct FlowArgs {
    #[command(flatten)]
    io: InputArgs,
    #[command(flatten)]
    pre: PreArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of predicted label PGMs, or of `level_NN` subdirectories.
    #[arg(long)]
    pred: Option<String>,
    /// Directory of ground-truth label PGMs.
    #[arg(long)]
    gt: Option<String>,
    /// Frame path pattern of the video.
    #[arg(long)]
    video: Option<String>,
    #[arg(long)]
    first: Option<usize>,
    /// Boundary tolerance, pixels.
    #[arg(long)]
    tol: Option<usize>,
    /// CSV output path; standard output when omitted.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description file.
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|source| {
        CliError::Data(vidseg_core::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn invalid(e: vidseg_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn level_dir(out: &Path, level: usize) -> PathBuf {
    out.join(format!("level_{level:02}"))
}

fn pre_settings(r: &mut Resolver, pre: &PreArgs) -> CliResult<(Option<BilateralParams>, FlowParams)> {
    let d = BilateralParams::default();
    let on = r.get("bilateral", pre.bilateral, Switch(true))?;
    let ss = r.get("sigma-s", pre.sigma_s, d.sigma_spatial())?;
    let sr = r.get("sigma-r", pre.sigma_r, d.sigma_range())?;
    let radius = r.get("radius", pre.radius, d.radius())?;
    let bilateral = if on.0 { Some(BilateralParams::new(ss, sr, radius).map_err(invalid)?) } else { None };
    let f = FlowParams::default();
    let flow = FlowParams {
        alpha: r.get("flow-alpha", pre.flow_alpha, f.alpha)?,
        pyramid_scale: r.get("flow-pyramid-scale", pre.flow_pyramid_scale, f.pyramid_scale)?,
        min_size: r.get("flow-min-size", pre.flow_min_size, f.min_size)?,
        iters_per_level: r.get("flow-iters", pre.flow_iters, f.iters_per_level)?,
        warp_steps: r.get("flow-warps", pre.flow_warps, f.warp_steps)?,
    };
    flow.validate().map_err(invalid)?;
    Ok((bilateral, flow))
}

fn stream_settings(r: &mut Resolver, s: &StreamArgs) -> CliResult<(StreamConfig, Option<PathBuf>)> {
    let d = StreamConfig::default();
    let config = StreamConfig {
        subseq_len: r.get("subseq", s.subseq, d.subseq_len)?,
        levels: r.get("levels", s.levels, d.levels)?,
        k0: r.get("k0", s.k0, d.k0)?,
        k_growth: r.get("k-growth", s.k_growth, d.k_growth)?,
        min_size: r.get("min-size", s.min_size, d.min_size)?,
        color_bins: r.get("color-bins", s.color_bins, d.color_bins)?,
        flow_bins: r.get("flow-bins", s.flow_bins, d.flow_bins)?,
        flow_range: r.get("flow-range", s.flow_range, d.flow_range)?,
        use_flow_edges: r.get("flow-edges", s.flow_edges, Switch(d.use_flow_edges))?.0,
        use_flow_feature: r.get("flow-feature", s.flow_feature, Switch(d.use_flow_feature))?.0,
    };
    config.validate().map_err(invalid)?;
    let external = r
        .get("external-flow", s.external_flow.as_ref().map(|p| p.display().to_string()), String::new())?;
    Ok((config, (!external.is_empty()).then(|| PathBuf::from(external))))
}

/// Resolved input pattern, first index and output directory.
struct Io {
    pattern: String,
    first: usize,
    out: PathBuf,
}

impl Io {
    fn load(&self) -> CliResult<FrameSequence> {
        Ok(load_frame_sequence(&self.pattern, self.first)?)
    }
}

fn input(r: &mut Resolver, io: &InputArgs) -> CliResult<Io> {
    let pattern: String = r.require("input", io.input.clone())?;
    let first = r.get("first", io.first, 0)?;
    let out: String = r.require("out", io.out.clone())?;
    Ok(Io {
        pattern,
        first,
        out: PathBuf::from(out),
    })
}

fn write_levels(levels: &[LabelVolume], out: &Path, seed: u64) -> CliResult<()> {
    for (l, vol) in levels.iter().enumerate() {
        let dir = level_dir(out, l);
        write_label_volume(vol, &dir)?;
        let color = colorize_labels(vol, seed);
        let pattern = dir.join("color").join("%05d.ppm");
        ensure_dir(&dir.join("color"))?;
        write_frame_sequence(&pattern.display().to_string(), 0, &color)?;
    }
    Ok(())
}

fn run_segment(args: &SegmentArgs, r: &mut Resolver, seed: u64) -> CliResult<()> {
    let io = input(r, &args.io)?;
    let (bilateral, flow) = pre_settings(r, &args.pre)?;
    let (stream, external) = stream_settings(r, &args.stream)?;
    r.finish("segment")?;
    let (seq, out) = (io.load()?, io.out);
    let settings = SegmentSettings { bilateral, flow, stream };
    let result = segment_video(&seq, &settings, external.as_deref())?;
    log::info!("segment: region counts per level {:?}", result.hierarchy.region_counts());
    write_levels(&result.hierarchy.levels, &out, seed)
}

fn run_motion(args: &MotionArgs, r: &mut Resolver, seed: u64) -> CliResult<()> {
    let io = input(r, &args.io)?;
    let (bilateral, flow) = pre_settings(r, &args.pre)?;
    let (stream, external) = stream_settings(r, &args.stream)?;
    let dd = DivergenceParams::default();
    let rd = RansacParams::default();
    let canonical = r.get("canonical", args.canonical, GridSize(dd.p, dd.q))?;
    let tau0 = r.get("tau0", args.tau0, 4.0)?;
    let growth = r.get("tau-growth", args.tau_growth, 2.0)?;
    let levels = r.get("motion-levels", args.motion_levels, 6)?;
    let mrf = r.get("mrf", args.mrf, Switch(false))?;
    let lambda = r.get("mrf-lambda", args.mrf_lambda, 8.0)?;
    let params = MotionParams {
        divergence: DivergenceParams {
            p: canonical.0,
            q: canonical.1,
            ..dd
        },
        ransac: RansacParams {
            iterations: r.get("ransac-iters", args.ransac_iters, rd.iterations)?,
            inlier_tol: r.get("ransac-tol", args.ransac_tol, rd.inlier_tol)?,
            ..rd
        },
        schedule: tau_schedule(tau0, growth, levels),
        supervoxel_level: r.get("supervoxel-level", args.supervoxel_level, 0)?,
        mrf_lambda: mrf.0.then_some(lambda),
        mrf_level: None,
        seed,
    };
    r.finish("motion")?;
    let (seq, out) = (io.load()?, io.out);
    let settings = SegmentSettings { bilateral, flow, stream };
    let (_, pairs) = motion_video(&seq, &settings, &params, external.as_deref())?;

    let mut table = String::from("pair level label a1 a2 a3 a4 a5 a6\n");
    let (w, h) = (seq.width(), seq.height());
    for (k, hier) in pairs.iter().enumerate() {
        let t = k + 1;
        let dir = out.join(format!("pair_{t:05}"));
        ensure_dir(&dir)?;
        let mut outputs: Vec<(String, &vidseg_core::motionlayers::MotionLevel)> =
            hier.levels.iter().enumerate().map(|(l, lv)| (format!("level_{l:02}"), lv)).collect();
        if let Some(s) = &hier.smoothed {
            outputs.push(("smoothed".into(), s));
        }
        for (name, lv) in outputs {
            let vol = LabelVolume::new(w, h, 1, lv.labels.clone())?;
            write_file(&dir.join(format!("{name}.pgm")), &encode_pgm16(w, h, &lv.labels)?)?;
            write_ppm(&dir.join(format!("{name}.ppm")), colorize_labels(&vol, seed).frame(0))?;
            for (label, m) in &lv.models {
                let _ = writeln!(
                    table,
                    "{t} {name} {label} {} {} {} {} {} {}",
                    m.a[0], m.a[1], m.a[2], m.a[3], m.a[4], m.a[5]
                );
            }
        }
        log::info!("motion: pair {t} region counts {:?}", hier.region_counts());
    }
    write_file(&out.join("affine.txt"), table.as_bytes())
}

fn run_flow(args: &FlowArgs, r: &mut Resolver) -> CliResult<()> {
    let io = input(r, &args.io)?;
    let (bilateral, flow) = pre_settings(r, &args.pre)?;
    r.finish("flow")?;
    let (seq, out) = (io.load()?, io.out);
    let frames = match &bilateral {
        Some(p) => bilateral_filter_sequence(&seq, p),
        None => seq,
    };
    let flows = flow_for_sequence(&frames, &flow, None)?;
    ensure_dir(&out)?;
    for (k, f) in flows.iter().enumerate() {
        write_flow(&out.join(flow_file_name(k + 1)), f)?;
    }
    Ok(())
}

/// Level volumes under `dir`: `level_NN` subdirectories, or `dir` itself.
fn read_levels(dir: &Path) -> CliResult<Vec<LabelVolume>> {
    let mut levels = Vec::new();
    while level_dir(dir, levels.len()).is_dir() {
        levels.push(read_label_volume(&level_dir(dir, levels.len()))?);
    }
    if levels.is_empty() {
        levels.push(read_label_volume(dir)?);
    }
    Ok(levels)
}

fn run_eval(args: &EvalArgs, r: &mut Resolver) -> CliResult<()> {
    let pred: String = r.require("pred", args.pred.clone())?;
    let gt: String = r.require("gt", args.gt.clone())?;
    let video: String = r.require("video", args.video.clone())?;
    let first = r.get("first", args.first, 0)?;
    let tol = r.get("tol", args.tol, DEFAULT_TOLERANCE)?;
    let out = r.get("out", args.out.clone(), String::new())?;
    r.finish("eval")?;
    let levels = read_levels(Path::new(&pred))?;
    let gt = read_label_volume(Path::new(&gt))?;
    let video = load_frame_sequence(&video, first)?;
    let csv = metrics_csv(&evaluate_levels(&levels, &gt, &video, tol)?);
    if out.is_empty() {
        print!("{csv}");
    } else {
        write_file(Path::new(&out), csv.as_bytes())?;
    }
    Ok(())
}

fn run_synth(args: &SynthArgs, r: &mut Resolver, seed: Option<u64>) -> CliResult<()> {
    let spec_path: String = r.require("spec", args.spec.clone())?;
    let out: String = r.require("out", args.out.clone())?;
    r.finish("synth")?;
    let text = std::fs::read_to_string(&spec_path).map_err(|e| vidseg_core::Error::Io {
        path: spec_path.clone().into(),
        source: e,
    })?;
    let mut spec = SceneSpec::parse(&text)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    log::info!("synth: scene seed = {}", spec.seed);
    let result = generate(&spec)?;
    let out = PathBuf::from(out);
    ensure_dir(&out.join("frames"))?;
    write_frame_sequence(&out.join("frames").join("%05d.ppm").display().to_string(), 0, &result.frames)?;
    write_label_volume(&result.gt_labels, &out.join("gt"))?;
    ensure_dir(&out.join("flow"))?;
    for (k, f) in result.gt_flows.iter().enumerate() {
        write_flow(&out.join("flow").join(flow_file_name(k + 1)), f)?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    let mut r = Resolver::new(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(0);
    log::info!("threads = {}", rayon::current_num_threads());
    log::info!("seed = {seed}");
    match &cli.command {
        Command::Segment(a) => run_segment(a, &mut r, seed),
        Command::Motion(a) => run_motion(a, &mut r, seed),
        Command::Flow(a) => run_flow(a, &mut r),
        Command::Eval(a) => run_eval(a, &mut r),
        Command::Synth(a) => run_synth(a, &mut r, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "warn" } else { "info" }))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
