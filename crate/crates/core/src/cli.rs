//! The `soss` command-line tool.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! unreadable or inconsistent data. Outputs are written atomically and never
//! contain timings; those go to standard error.

use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::augment::{augment_scene, AugConfig};
use crate::error::Error;
use crate::fusion::{fallback_labels, fuse_detailed, FallbackPolicy, FusionConfig, OverlapPolicy};
use crate::io;
use crate::metrics::{evaluate, fused_score_map, MetricReport, ScoreMap};
use crate::par;
use crate::proposal::{gen_prompt_grid, DEFAULT_POINTS_PER_SIDE};
use crate::synth::{gen_sample, CorruptionConfig};
use crate::types::{ClassId, ClassPlanes};
use crate::seeded_rng;

pub const THREADS_ENV: &str = "SOSS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "soss", version, about = "Soft-voting segmentation fusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuse a probability map with segment proposals into a label mask.
    Fuse(FuseArgs),
    /// Score a predicted label mask against ground truth.
    Eval(EvalArgs),
    /// Augment scene directories.
    Augment(AugmentArgs),
    /// Write a point-prompt grid for a proposal model.
    GenGrid(GenGridArgs),
    /// Generate synthetic scenes with fusion inputs.
    Synth(SynthArgs),
    /// Compare coarse and fused masks over a synthetic set.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Fallback {
    Argmax,
    Background,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Overlap {
    Smaller,
    Later,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    /// Label for pixels no segment covers.
    #[arg(long, value_enum, default_value = "argmax")]
    fallback: Fallback,
    /// Owner of pixels covered by several segments.
    #[arg(long, value_enum, default_value = "smaller")]
    overlap: Overlap,
}

impl PolicyArgs {
    fn config(&self) -> FusionConfig {
        let fallback = match self.fallback {
            Fallback::Argmax => FallbackPolicy::Argmax,
            Fallback::Background => FallbackPolicy::Background,
        };
        let overlap = match self.overlap {
            Overlap::Smaller => OverlapPolicy::SmallerSegmentWins,
            Overlap::Later => OverlapPolicy::LaterSegmentWins,
        };
        FusionConfig::new(fallback, overlap)
    }
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long)]
    sem: PathBuf,
    #[arg(long)]
    segments: PathBuf,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Probability map whose class plane is used for AUC.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    class: ClassId,
    #[arg(long)]
    json: PathBuf,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// JSON file with any subset of the augmentation fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// A scene directory, or a directory of scene directories.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    flip_prob: Option<f64>,
    #[arg(long)]
    jitter_max: Option<f64>,
    #[arg(long)]
    jitter_prob: Option<f64>,
    #[arg(long)]
    bc_max: Option<f64>,
    #[arg(long)]
    copy_paste_fraction: Option<f64>,
    #[arg(long)]
    target_size: Option<usize>,
}

#[derive(Debug, Args)]
struct GenGridArgs {
    #[arg(long)]
    height: usize,
    #[arg(long)]
    width: usize,
    #[arg(long, default_value_t = DEFAULT_POINTS_PER_SIDE)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Seed of the first scene; scene i uses seed + i.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 6)]
    shapes: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    blur_radius: usize,
    #[arg(long, default_value_t = 0.05)]
    flip_noise: f64,
    #[arg(long, default_value_t = 0)]
    boundary_jitter: usize,
    #[arg(long, default_value_t = 3.0)]
    over_split: f64,
    #[arg(long, default_value_t = 0.0)]
    drop_fraction: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    json: PathBuf,
    #[arg(long, default_value_t = 1)]
    class: ClassId,
    #[command(flatten)]
    policy: PolicyArgs,
}

struct Failure {
    code: i32,
    message: String,
}

type CliResult = std::result::Result<(), Failure>;

fn usage(message: impl Display) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

fn data(path: &Path, err: impl Display) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {err}", path.display()),
    }
}

/// Data error from a library call on `path`. File-system and JSON errors
/// already name their file.
fn located(path: &Path, err: Error) -> Failure {
    match err {
        Error::Io { .. } | Error::Json { .. } => Failure {
            code: 2,
            message: err.to_string(),
        },
        other => data(path, other),
    }
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = apply_thread_limit().and_then(|()| match cli.command {
        Command::Fuse(a) => fuse(a),
        Command::Eval(a) => eval(a),
        Command::Augment(a) => augment(a),
        Command::GenGrid(a) => gen_grid(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
    });
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("soss: {}", f.message);
            f.code
        }
    }
}

fn apply_thread_limit() -> CliResult {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| usage(format!("{THREADS_ENV}={value:?} is not a thread count")))?;
    par::configure_threads(threads);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    io::write_atomic(path, text.as_bytes()).map_err(|e| located(path, e))
}

fn shape(dims: (usize, usize)) -> String {
    format!("{}x{}", dims.0, dims.1)
}

fn fuse(a: FuseArgs) -> CliResult {
    let start = Instant::now();
    let sem = io::read_probmap(&a.sem).map_err(|e| located(&a.sem, e))?;
    let segs = io::read_segments(&a.segments).map_err(|e| located(&a.segments, e))?;
    if sem.dims() != segs.dims() {
        return Err(data(
            &a.segments,
            format!(
                "segments are {} but probability map {} is {}",
                shape(segs.dims()),
                a.sem.display(),
                shape(sem.dims())
            ),
        ));
    }
    let fused = fuse_detailed(&sem, &segs, &a.policy.config()).map_err(|e| data(&a.segments, e))?;
    io::write_labelmask(&a.out, &fused.labels).map_err(|e| located(&a.out, e))?;
    let (h, w) = sem.dims();
    let covered = fused.ownership.covered() as f64 / (h * w) as f64;
    eprintln!(
        "segments: {}  covered: {:.4}  time: {:.1} ms",
        segs.len(),
        covered,
        start.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let pred = io::read_labelmask(&a.pred).map_err(|e| located(&a.pred, e))?;
    let gt = io::read_labelmask(&a.gt).map_err(|e| located(&a.gt, e))?;
    if pred.dims() != gt.dims() {
        return Err(data(
            &a.pred,
            format!(
                "prediction is {} but ground truth {} is {}",
                shape(pred.dims()),
                a.gt.display(),
                shape(gt.dims())
            ),
        ));
    }
    let scores = match &a.scores {
        Some(path) => {
            let sem = io::read_probmap(path).map_err(|e| located(path, e))?;
            if sem.dims() != gt.dims() {
                return Err(data(
                    path,
                    format!(
                        "scores are {} but ground truth {} is {}",
                        shape(sem.dims()),
                        a.gt.display(),
                        shape(gt.dims())
                    ),
                ));
            }
            Some(ScoreMap::from_plane(&sem, a.class).map_err(|e| data(path, e))?)
        }
        None => None,
    };
    let report = evaluate(&pred, &gt, scores.as_ref(), a.class).map_err(|e| data(&a.gt, e))?;
    write_json(&a.json, &report)
}

/// Scene directories under `dir`: `dir` itself when it holds a scene,
/// otherwise its subdirectories that do, sorted by name.
fn scene_dirs(dir: &Path) -> std::result::Result<Vec<(PathBuf, Option<OsString>)>, Failure> {
    if dir.join(io::SCENE_FILE).is_file() {
        return Ok(vec![(dir.to_path_buf(), None)]);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| data(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| data(dir, e))?;
        let path = entry.path();
        if path.is_dir() && path.join(io::SCENE_FILE).is_file() {
            found.push((path, Some(entry.file_name())));
        }
    }
    found.sort();
    Ok(found)
}

fn aug_config(a: &AugmentArgs) -> std::result::Result<AugConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            AugConfig::from_json_str(&text)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => AugConfig::default(),
    };
    let overrides = [
        (&mut cfg.flip_prob, a.flip_prob),
        (&mut cfg.jitter_max, a.jitter_max),
        (&mut cfg.jitter_prob, a.jitter_prob),
        (&mut cfg.bc_max, a.bc_max),
        (&mut cfg.copy_paste_fraction, a.copy_paste_fraction),
    ];
    for (field, value) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    if let Some(v) = a.target_size {
        cfg.target_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn augment(a: AugmentArgs) -> CliResult {
    let cfg = aug_config(&a)?;
    let dirs = scene_dirs(&a.input)?;
    let scenes = dirs
        .iter()
        .map(|(dir, _)| io::read_scene_dir(dir).map_err(|e| located(dir, e)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(&a.out).map_err(|e| data(&a.out, e))?;
    let results = par::map_range(scenes.len(), |i| -> CliResult {
        // per-scene seed is the configured seed XOR the scene's position;
        // the donor is the next scene in name order
        let mut rng = seeded_rng(cfg.seed ^ i as u64);
        let donor = &scenes[(i + 1) % scenes.len()];
        let (dir, name) = &dirs[i];
        let out = augment_scene(&scenes[i], Some(donor), &cfg, &mut rng).map_err(|e| data(dir, e))?;
        let target = match name {
            Some(name) => a.out.join(name),
            None => a.out.clone(),
        };
        io::write_scene_dir(&target, &out).map_err(|e| located(&target, e))
    });
    results.into_iter().collect::<CliResult>()?;
    eprintln!("augmented {} scene(s)", scenes.len());
    Ok(())
}

fn gen_grid(a: GenGridArgs) -> CliResult {
    let grid = gen_prompt_grid(a.height, a.width, a.n).map_err(usage)?;
    io::write_prompt_grid(&a.out, &grid).map_err(|e| located(&a.out, e))
}

/// Directory name of the `i`-th generated scene.
pub fn scene_name(i: usize) -> String {
    format!("scene_{i:04}")
}

fn synth(a: SynthArgs) -> CliResult {
    let start = Instant::now();
    let cfg = CorruptionConfig {
        blur_radius: a.blur_radius,
        flip_noise: a.flip_noise,
        boundary_jitter: a.boundary_jitter,
        over_split: a.over_split,
        drop_fraction: a.drop_fraction,
    };
    cfg.validate().map_err(usage)?;
    if a.size == 0 {
        return Err(usage("--size must be at least 1"));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| data(&a.out, e))?;
    let results = par::map_range(a.count, |i| -> CliResult {
        let sample = gen_sample(a.seed.wrapping_add(i as u64), a.size, a.shapes, &cfg)
            .map_err(usage)?;
        let dir = a.out.join(scene_name(i));
        io::write_scene_dir(&dir, &sample.scene).map_err(|e| located(&dir, e))?;
        let sem_path = dir.join(io::SEM_FILE);
        io::write_probmap(&sem_path, &sample.sem).map_err(|e| located(&sem_path, e))?;
        let seg_path = dir.join(io::SEGMENTS_FILE);
        io::write_segments(&seg_path, &sample.segments).map_err(|e| located(&seg_path, e))
    });
    results.into_iter().collect::<CliResult>()?;
    eprintln!(
        "wrote {} scene(s) in {:.1} ms",
        a.count,
        start.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}

/// Coarse-versus-fused comparison for one scene.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneComparison {
    pub scene: String,
    pub coarse: MetricReport,
    pub fused: MetricReport,
    pub iou_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub class: ClassId,
    pub scenes: usize,
    /// Scenes where the fused IoU is at least the coarse IoU.
    pub fused_not_worse: usize,
    pub median_iou_delta: Option<f64>,
    pub per_scene: Vec<SceneComparison>,
}

/// Median of the finite values, averaging the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

fn compare_scene(
    dir: &Path,
    name: String,
    cfg: &FusionConfig,
    class: ClassId,
) -> std::result::Result<SceneComparison, Failure> {
    let sem_path = dir.join(io::SEM_FILE);
    let seg_path = dir.join(io::SEGMENTS_FILE);
    let gt_path = dir.join(io::GT_FILE);
    let sem = io::read_probmap(&sem_path).map_err(|e| located(&sem_path, e))?;
    let segs = io::read_segments(&seg_path).map_err(|e| located(&seg_path, e))?;
    let gt = io::read_labelmask(&gt_path).map_err(|e| located(&gt_path, e))?;

    let coarse = fallback_labels(&sem, cfg.tie);
    let fused = fuse_detailed(&sem, &segs, cfg).map_err(|e| data(&seg_path, e))?;
    let coarse_scores = ScoreMap::from_plane(&sem, class).map_err(|e| data(&sem_path, e))?;
    let fused_scores = fused_score_map(&sem, &segs, cfg, class).map_err(|e| data(&seg_path, e))?;

    // AUC is undefined when the ground truth holds a single class; the
    // remaining metrics are still reported
    let report = |pred, scores| -> std::result::Result<MetricReport, Failure> {
        match evaluate(pred, &gt, Some(scores), class) {
            Ok(r) => Ok(r),
            Err(Error::SingleClassGroundTruth { .. }) => {
                evaluate(pred, &gt, None, class).map_err(|e| data(&gt_path, e))
            }
            Err(e) => Err(data(&gt_path, e)),
        }
    };
    let coarse = report(&coarse, &coarse_scores)?;
    let fused = report(&fused.labels, &fused_scores)?;
    let iou_delta = match (fused.iou, coarse.iou) {
        (Some(f), Some(c)) => Some(f - c),
        _ => None,
    };
    Ok(SceneComparison {
        scene: name,
        coarse,
        fused,
        iou_delta,
    })
}

fn bench(a: BenchArgs) -> CliResult {
    let start = Instant::now();
    let cfg = a.policy.config();
    let entries = std::fs::read_dir(&a.dir).map_err(|e| data(&a.dir, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| data(&a.dir, e))?.path();
        if path.join(io::SEM_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    let results = par::map_slice(&dirs, |dir| {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        compare_scene(dir, name, &cfg, a.class)
    });
    let per_scene = results
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let deltas: Vec<f64> = per_scene.iter().filter_map(|s| s.iou_delta).collect();
    let report = BenchReport {
        class: a.class,
        scenes: per_scene.len(),
        fused_not_worse: deltas.iter().filter(|&&d| d >= 0.0).count(),
        median_iou_delta: median(&deltas),
        per_scene,
    };
    write_json(&a.json, &report)?;
    eprintln!(
        "scenes: {}  fused >= coarse: {}  median IoU delta: {}  time: {:.1} ms",
        report.scenes,
        report.fused_not_worse,
        report
            .median_iou_delta
            .map_or("undefined".to_string(), |d| format!("{d:.4}")),
        start.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}
