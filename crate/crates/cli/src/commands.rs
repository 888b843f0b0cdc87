use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use log::info;
use rayon::prelude::*;

use semloc::eval::{median, pose_errors, Confusion};
use semloc::fusion::{fuse_labels as fuse, Horizon, Mask};
use semloc::geometry::Pose;
use semloc::io::{self, Config, FramePose};
use semloc::localization::{mean_speed, stage_records, track_sequence, KalmanConfig, Refiner, TrackFrame};
use semloc::noise::{perturb_sequence, simulate_trials, NoiseModel};
use semloc::render::{LabelMap, RenderIndex};
use semloc::road::{build_offset_field, build_road_raster, RoadOffsetField};
use semloc::semantic_map::{build_map as fuse_rounds, ClassRegistry, SemanticPointCloud, SplatTable};
use semloc::synth::generate_synthetic_scene;

use crate::{Common, PipelineFailure, UsageError};

/// File names inside a dataset or map directory.
pub mod names {
    pub const SCANS: &str = "scans.smap";
    pub const MAP: &str = "map.smap";
    pub const SPLATS: &str = "splats.txt";
    pub const FIELD: &str = "road.field";
    pub const REGISTRY: &str = "registry.txt";
    pub const CONFIG: &str = "config.toml";
    pub const MAPPING_POSES: &str = "mapping_poses.txt";
    pub const GT_POSES: &str = "gt_poses.txt";
    pub const NOISY_POSES: &str = "noisy_poses.txt";
    pub const LABELS: &str = "labels";
    pub const DEPTH: &str = "depth";
    pub const TRACK_POSES: &str = "track_poses.txt";
    pub const STAGES: &str = "stages.txt";

    pub fn scan_poses(round: usize) -> String {
        format!("scan_poses_{round}.txt")
    }

    pub fn frame_png(frame: u64) -> String {
        format!("{frame:06}.png")
    }
}

fn setup(c: &Common) -> Result<Config> {
    let mut cfg = match &c.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    fs::create_dir_all(&c.out_dir).with_context(|| format!("creating {}", c.out_dir.display()))?;
    Ok(cfg)
}

fn load_registry(path: Option<&Path>) -> Result<ClassRegistry> {
    Ok(match path {
        Some(p) => io::load_registry(p)?,
        None => ClassRegistry::street_default(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn poses_of(frames: &[FramePose]) -> Vec<Pose> {
    frames.iter().map(|f| f.pose).collect()
}

fn tag(frames: &[FramePose], poses: &[Pose]) -> Vec<FramePose> {
    frames
        .iter()
        .zip(poses)
        .map(|(f, p)| FramePose {
            frame: f.frame,
            pose: *p,
        })
        .collect()
}

/// Observed label map at the loss camera: taken as is when it already has
/// that size, subsampled when it has the full camera size.
fn observation(labels: LabelMap, cfg: &Config) -> Result<LabelMap> {
    let full = cfg.camera.intrinsics()?;
    let loss = cfg.camera.loss_intrinsics()?;
    match labels.dims() {
        d if d == (loss.width, loss.height) => Ok(labels),
        d if d == (full.width, full.height) => Ok(labels.downsample(cfg.camera.loss_downsample)),
        (w, h) => Err(semloc::Error::DimensionMismatch {
            left_w: w,
            left_h: h,
            right_w: full.width,
            right_h: full.height,
        }
        .into()),
    }
}

/// Map, splats and road field as loaded for localization.
struct MapInputs {
    map: SemanticPointCloud,
    splats: SplatTable,
    field: RoadOffsetField,
}

#[derive(Args, Debug, Clone)]
pub struct MapFiles {
    /// Directory holding the outputs of `build-map`.
    #[arg(long)]
    pub map_dir: Option<PathBuf>,
    /// Map file; overrides `--map-dir`.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub splats: Option<PathBuf>,
    /// Road offset field file.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Class registry; defaults to the built-in street classes.
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

impl MapFiles {
    fn path(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        match (explicit, &self.map_dir) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(d)) => Ok(d.join(name)),
            (None, None) => Err(UsageError(format!("give --map-dir or the file for {name}")).into()),
        }
    }

    fn registry(&self) -> Result<ClassRegistry> {
        match (&self.registry, &self.map_dir) {
            (Some(p), _) => load_registry(Some(p)),
            (None, Some(d)) if d.join(names::REGISTRY).exists() => load_registry(Some(&d.join(names::REGISTRY))),
            _ => load_registry(None),
        }
    }

    fn load_render(&self) -> Result<(SemanticPointCloud, SplatTable)> {
        let map = io::load_map(&self.path(&self.map, names::MAP)?)?;
        let splats = io::load_splats(&self.path(&self.splats, names::SPLATS)?)?;
        Ok((map, splats))
    }

    fn load_all(&self) -> Result<MapInputs> {
        let (map, splats) = self.load_render()?;
        let field = io::load_road_field(&self.path(&self.field, names::FIELD)?)?;
        Ok(MapInputs { map, splats, field })
    }
}

// ---------------------------------------------------------------- build-map

#[derive(Args, Debug)]
pub struct BuildMapArgs {
    #[command(flatten)]
    pub common: Common,
    /// Multi-round scan cloud.
    #[arg(long)]
    pub scans: PathBuf,
    /// Scanner poses used to size the splats.
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

pub fn build_map(a: BuildMapArgs) -> Result<()> {
    let cfg = setup(&a.common)?;
    let registry = load_registry(a.registry.as_deref())?;
    let scans = io::load_map(&a.scans)?;
    scans.validate(Some(&registry))?;
    let trajectory = poses_of(&io::load_poses(&a.poses)?);
    let (map, splats) = fuse_rounds(&scans.split_rounds(), &cfg.map.build_params(), &trajectory, &registry)?;
    let grid = build_road_raster(&map, &registry, cfg.map.road_cell)?;
    let field = build_offset_field(&grid)?;
    let out = &a.common.out_dir;
    io::save_map(&out.join(names::MAP), &map)?;
    io::save_splats(&out.join(names::SPLATS), &splats)?;
    io::save_road_field(&out.join(names::FIELD), &field)?;
    io::save_registry(&out.join(names::REGISTRY), &registry)?;
    println!(
        "map_points={} scan_points={} road_cells={}",
        map.len(),
        scans.len(),
        grid.road_count()
    );
    Ok(())
}

// ------------------------------------------------------------------- render

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub files: MapFiles,
    /// Poses to render, one `frame_id qw qx qy qz tx ty tz` line each.
    #[arg(long)]
    pub poses: PathBuf,
    /// Render at the loss camera instead of the full camera.
    #[arg(long)]
    pub loss_camera: bool,
    /// Skip depth output.
    #[arg(long, conflicts_with = "depth_only")]
    pub labels_only: bool,
    /// Skip label output.
    #[arg(long)]
    pub depth_only: bool,
}

pub fn render(a: RenderArgs) -> Result<()> {
    let cfg = setup(&a.common)?;
    let (map, splats) = a.files.load_render()?;
    let frames = io::load_poses(&a.poses)?;
    let k = if a.loss_camera {
        cfg.camera.loss_intrinsics()?
    } else {
        cfg.camera.intrinsics()?
    };
    let index = RenderIndex::new(&map, &splats);
    let out = &a.common.out_dir;
    for f in &frames {
        let r = index.render(&f.pose, &k);
        if !a.depth_only {
            io::save_label_png(&out.join(names::LABELS).join(names::frame_png(f.frame)), &r.labels)?;
        }
        if !a.labels_only {
            io::save_depth(&out.join(names::DEPTH).join(names::frame_png(f.frame)), &r.depth)?;
        }
    }
    println!("rendered={} width={} height={}", frames.len(), k.width, k.height);
    Ok(())
}

// ----------------------------------------------------------------- simulate

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Test frames; overrides the scene config.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Scan rounds; overrides the scene config.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Also write ground-truth depth PNGs.
    #[arg(long)]
    pub depth: bool,
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = setup(&a.common)?;
    if let Some(n) = a.frames {
        cfg.scene.frames = n;
    }
    if let Some(r) = a.rounds {
        cfg.scene.rounds = r;
    }
    cfg.validate()?;
    let scene = generate_synthetic_scene(&cfg.scene, cfg.seed)?;
    let out = &a.common.out_dir;

    // Downstream commands read this config: splat bounds follow the scene's
    // sampling and the filter speed the scan drives.
    let (lo, hi) = scene.splat_range();
    cfg.map.splat_min = lo;
    cfg.map.splat_max = hi;
    let drives: Vec<&[Pose]> = scene.scan_trajectories.iter().map(|t| t.as_slice()).collect();
    if let Some(v) = mean_speed(&drives) {
        cfg.kalman.speed = v;
    }
    write_text(&out.join(names::CONFIG), &cfg.to_text())?;

    io::save_map(
        &out.join(names::SCANS),
        &SemanticPointCloud::merge_rounds(&scene.rounds),
    )?;
    io::save_registry(&out.join(names::REGISTRY), &scene.registry)?;
    let numbered = |poses: &[Pose]| -> Vec<FramePose> {
        poses
            .iter()
            .enumerate()
            .map(|(n, p)| FramePose {
                frame: n as u64,
                pose: *p,
            })
            .collect()
    };
    io::save_poses(&out.join(names::MAPPING_POSES), &numbered(&scene.mapping_trajectory))?;
    for (r, t) in scene.scan_trajectories.iter().enumerate() {
        io::save_poses(&out.join(names::scan_poses(r)), &numbered(t))?;
    }
    let gt = numbered(&scene.trajectory);
    io::save_poses(&out.join(names::GT_POSES), &gt)?;
    let noisy = perturb_sequence(&scene.trajectory, &cfg.noise);
    io::save_poses(&out.join(names::NOISY_POSES), &numbered(&noisy))?;

    let k = cfg.camera.intrinsics()?;
    for f in &gt {
        let (labels, depth) = scene.ground_truth(&f.pose, &k);
        io::save_label_png(&out.join(names::LABELS).join(names::frame_png(f.frame)), &labels)?;
        if a.depth {
            io::save_depth(&out.join(names::DEPTH).join(names::frame_png(f.frame)), &depth)?;
        }
    }
    let points: usize = scene.rounds.iter().map(|r| r.len()).sum();
    println!(
        "rounds={} scan_points={} frames={}",
        scene.rounds.len(),
        points,
        gt.len()
    );
    Ok(())
}

// ---------------------------------------------------------------- localize

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub files: MapFiles,
    /// Observed label map (full or loss camera size).
    #[arg(long)]
    pub observed: PathBuf,
    /// Pose file holding the noisy prior.
    #[arg(long)]
    pub poses: PathBuf,
    /// Frame id to read from the pose file; defaults to the first line.
    #[arg(long)]
    pub frame: Option<u64>,
}

pub fn localize(a: LocalizeArgs) -> Result<()> {
    let cfg = setup(&a.common)?;
    let inputs = a.files.load_all()?;
    let registry = a.files.registry()?;
    let all = io::load_poses(&a.poses)?;
    let prior = match a.frame {
        Some(id) => all.iter().find(|f| f.frame == id).copied(),
        None => all.first().copied(),
    }
    .ok_or_else(|| semloc::Error::InvalidArgument(format!("no such frame in {}", a.poses.display())))?;
    let observed = observation(io::load_label_png(&a.observed)?, &cfg)?;
    let refiner =
        Refiner::new(&inputs.map, &inputs.splats, cfg.refiner.clone())?.with_loss_weights(registry.weight_table());
    let frames = [TrackFrame {
        observed,
        noisy: prior.pose,
    }];
    let k = cfg.camera.loss_intrinsics()?;
    // A single frame passes through the filter unchanged.
    let res = track_sequence(&frames, &refiner, &inputs.field, &k, &cfg.kalman, None)?;
    let r = &res[0];
    let out = FramePose {
        frame: prior.frame,
        pose: r.refined,
    };
    io::save_poses(&a.common.out_dir.join("localized_pose.txt"), &[out])?;
    for rec in stage_records(&res, None) {
        println!("{}", rec);
    }
    if r.failed() {
        return Err(PipelineFailure(format!("frame {}: refinement found no overlap", prior.frame)).into());
    }
    Ok(())
}

// -------------------------------------------------------------------- track

#[derive(Args, Debug)]
pub struct TrackArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub files: MapFiles,
    /// Directory of observed label maps named `<frame:06>.png`.
    #[arg(long)]
    pub observed_dir: PathBuf,
    /// Noisy pose sequence.
    #[arg(long)]
    pub poses: PathBuf,
    /// Ground-truth poses, for error columns in the diagnostics.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Training drives; when given, the filter speed is their mean step.
    #[arg(long = "train-poses")]
    pub train_poses: Vec<PathBuf>,
    /// Skip writing the final label maps.
    #[arg(long)]
    pub no_labels: bool,
}

fn load_observations(dir: &Path, frames: &[FramePose], cfg: &Config) -> Result<Vec<LabelMap>> {
    frames
        .par_iter()
        .map(|f| observation(io::load_label_png(&dir.join(names::frame_png(f.frame)))?, cfg))
        .collect()
}

fn kalman_config(cfg: &Config, train: &[PathBuf]) -> Result<KalmanConfig> {
    let mut kc = cfg.kalman.clone();
    if !train.is_empty() {
        let drives: Vec<Vec<Pose>> = train
            .iter()
            .map(|p| Ok(poses_of(&io::load_poses(p)?)))
            .collect::<Result<_>>()?;
        let refs: Vec<&[Pose]> = drives.iter().map(|d| d.as_slice()).collect();
        kc.speed = mean_speed(&refs).ok_or_else(|| UsageError("training drives need at least two poses".into()))?;
    }
    Ok(kc)
}

pub fn track(a: TrackArgs) -> Result<()> {
    let cfg = setup(&a.common)?;
    let inputs = a.files.load_all()?;
    let registry = a.files.registry()?;
    let noisy = io::load_poses(&a.poses)?;
    let truth = match &a.gt {
        Some(p) => Some(align_truth(&noisy, &io::load_poses(p)?)?),
        None => None,
    };
    let observed = load_observations(&a.observed_dir, &noisy, &cfg)?;
    let kc = kalman_config(&cfg, &a.train_poses)?;
    let refiner =
        Refiner::new(&inputs.map, &inputs.splats, cfg.refiner.clone())?.with_loss_weights(registry.weight_table());
    let frames: Vec<TrackFrame> = observed
        .into_iter()
        .zip(&noisy)
        .map(|(observed, n)| TrackFrame {
            observed,
            noisy: n.pose,
        })
        .collect();
    let k = cfg.camera.loss_intrinsics()?;
    info!("tracking {} frames", frames.len());
    let res = track_sequence(&frames, &refiner, &inputs.field, &k, &kc, truth.as_deref())?;

    let out = &a.common.out_dir;
    let smoothed: Vec<Pose> = res.iter().map(|r| r.smoothed).collect();
    io::save_poses(&out.join(names::TRACK_POSES), &tag(&noisy, &smoothed))?;
    let mut text = String::new();
    for rec in stage_records(&res, truth.as_deref()) {
        writeln!(text, "{rec}").unwrap();
    }
    write_text(&out.join(names::STAGES), &text)?;
    if !a.no_labels {
        let full = cfg.camera.intrinsics()?;
        for (f, p) in noisy.iter().zip(&smoothed) {
            let labels = refiner.full_index().render_labels(p, &full);
            io::save_label_png(&out.join(names::LABELS).join(names::frame_png(f.frame)), &labels)?;
        }
    }
    if let Some(t) = &truth {
        for (stage, pick) in STAGES {
            let est: Vec<Pose> = res.iter().map(pick).collect();
            let (te, re) = pose_errors(&est, t)?;
            println!("{stage}_median_trans={te:.6} {stage}_median_rot={re:.6}");
        }
    }
    let failed: Vec<u64> = noisy
        .iter()
        .zip(&res)
        .filter(|(_, r)| r.failed())
        .map(|(f, _)| f.frame)
        .collect();
    if !failed.is_empty() {
        return Err(PipelineFailure(format!("refinement failed on frames {failed:?}")).into());
    }
    Ok(())
}

type StagePick = fn(&semloc::localization::FrameResult) -> Pose;

const STAGES: [(&str, StagePick); 4] = [
    ("raw", |r| r.raw),
    ("rectified", |r| r.rectified),
    ("refined", |r| r.refined),
    ("smoothed", |r| r.smoothed),
];

/// Ground-truth poses in the frame order of `frames`.
fn align_truth(frames: &[FramePose], truth: &[FramePose]) -> Result<Vec<Pose>> {
    frames
        .iter()
        .map(|f| {
            truth
                .iter()
                .find(|t| t.frame == f.frame)
                .map(|t| t.pose)
                .ok_or_else(|| semloc::Error::InvalidArgument(format!("no ground truth for frame {}", f.frame)).into())
        })
        .collect()
}

// ---------------------------------------------------------------- fuse-labels

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[command(flatten)]
    pub common: Common,
    /// Static label render.
    #[arg(long)]
    pub labels: PathBuf,
    /// Depth render matching the labels.
    #[arg(long)]
    pub depth: PathBuf,
    /// Object mask as `path=class`; later masks win.
    #[arg(long = "mask")]
    pub masks: Vec<String>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "fused.png")]
    pub output: String,
}

fn parse_mask(spec: &str, registry: &ClassRegistry) -> Result<(PathBuf, u8)> {
    let (path, class) = spec
        .rsplit_once('=')
        .ok_or_else(|| UsageError(format!("mask `{spec}` is not `path=class`")))?;
    let id = match class.parse::<u8>() {
        Ok(id) => id,
        Err(_) => registry
            .by_name(class)
            .map(|c| c.id)
            .ok_or_else(|| UsageError(format!("unknown class `{class}`")))?,
    };
    Ok((PathBuf::from(path), id))
}

pub fn fuse_labels(a: FuseArgs) -> Result<()> {
    let cfg = setup(&a.common)?;
    let registry = load_registry(a.registry.as_deref())?;
    let labels = io::load_label_png(&a.labels)?;
    let depth = io::load_depth(&a.depth)?;
    let masks: Vec<(Mask, u8)> = a
        .masks
        .iter()
        .map(|m| {
            let (path, id) = parse_mask(m, &registry)?;
            Ok((io::load_mask_png(&path)?, id))
        })
        .collect::<Result<_>>()?;
    let horizon = cfg.fusion.horizon_row.map_or(Horizon::FromDepth, Horizon::Row);
    let sky_name = cfg.fusion.sky_class.as_deref().unwrap_or("sky");
    let sky = registry
        .by_name(sky_name)
        .map(|c| c.id)
        .ok_or_else(|| UsageError(format!("registry has no class `{sky_name}`")))?;
    let fused = fuse(&labels, &depth, &masks, horizon, sky, &registry)?;
    io::save_label_png(&a.common.out_dir.join(&a.output), &fused)?;
    Ok(())
}

// ------------------------------------------------------------------ evaluate

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Estimated poses.
    #[arg(long, requires = "gt")]
    pub poses: Option<PathBuf>,
    /// Ground-truth poses.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Directory of predicted label maps.
    #[arg(long, requires = "gt_dir")]
    pub pred_dir: Option<PathBuf>,
    /// Directory of ground-truth label maps with the same file names.
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    Ok(names)
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    setup(&a.common)?;
    if a.poses.is_none() && a.pred_dir.is_none() {
        return Err(UsageError("nothing to evaluate: give --poses/--gt or --pred-dir/--gt-dir".into()).into());
    }
    let registry = load_registry(a.registry.as_deref())?;
    let mut report = String::new();
    if let (Some(est), Some(gt)) = (&a.poses, &a.gt) {
        let est = io::load_poses(est)?;
        let truth = align_truth(&est, &io::load_poses(gt)?)?;
        let (te, re) = pose_errors(&poses_of(&est), &truth)?;
        writeln!(report, "frames={}", est.len()).unwrap();
        writeln!(report, "median_translation_m={te:.6}").unwrap();
        writeln!(report, "median_rotation_deg={re:.6}").unwrap();
    }
    if let (Some(pred), Some(gt)) = (&a.pred_dir, &a.gt_dir) {
        let names = png_names(gt)?;
        let parts: Vec<Confusion> = names
            .par_iter()
            .map(|n| {
                let mut c = Confusion::new();
                c.accumulate(&io::load_label_png(&pred.join(n))?, &io::load_label_png(&gt.join(n))?)?;
                Ok(c)
            })
            .collect::<Result<_>>()?;
        let mut conf = Confusion::new();
        for c in &parts {
            conf.merge(c);
        }
        let m = conf.metrics()?;
        writeln!(report, "label_frames={}", names.len()).unwrap();
        report.push_str(&m.report());
        write_text(&a.common.out_dir.join("per_class.csv"), &m.per_class_csv(&registry))?;
    }
    write_text(&a.common.out_dir.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

// -------------------------------------------------------------------- trials

#[derive(Args, Debug)]
pub struct TrialsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub files: MapFiles,
    /// Number of trials; overrides the config.
    #[arg(long)]
    pub n: Option<usize>,
    /// Directory of observed label maps named `<frame:06>.png`.
    #[arg(long)]
    pub observed_dir: PathBuf,
    /// Ground-truth poses; each trial perturbs them afresh.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long = "train-poses")]
    pub train_poses: Vec<PathBuf>,
    /// Only use the first this many frames.
    #[arg(long)]
    pub frames: Option<usize>,
}

pub fn trials(a: TrialsArgs) -> Result<()> {
    let cfg = setup(&a.common)?;
    let n = a.n.unwrap_or(cfg.trials.n);
    let inputs = a.files.load_all()?;
    let registry = a.files.registry()?;
    let mut gt = io::load_poses(&a.gt)?;
    if let Some(m) = a.frames {
        gt.truncate(m);
    }
    let truth = poses_of(&gt);
    let observed = load_observations(&a.observed_dir, &gt, &cfg)?;
    let kc = kalman_config(&cfg, &a.train_poses)?;
    let refiner =
        Refiner::new(&inputs.map, &inputs.splats, cfg.refiner.clone())?.with_loss_weights(registry.weight_table());
    let k = cfg.camera.loss_intrinsics()?;

    let experiment = |seed: u64| -> semloc::Result<Vec<(String, f64)>> {
        let nm = NoiseModel {
            seed,
            ..cfg.noise.clone()
        };
        let noisy = perturb_sequence(&truth, &nm);
        let frames: Vec<TrackFrame> = observed
            .iter()
            .zip(&noisy)
            .map(|(o, p)| TrackFrame {
                observed: o.clone(),
                noisy: *p,
            })
            .collect();
        let res = track_sequence(&frames, &refiner, &inputs.field, &k, &kc, None)?;
        let mut metrics = Vec::new();
        for (stage, pick) in STAGES {
            let est: Vec<Pose> = res.iter().map(pick).collect();
            let (te, re) = pose_errors(&est, &truth)?;
            metrics.push((format!("{stage}_median_trans"), te));
            metrics.push((format!("{stage}_median_rot"), re));
        }
        let acc: Vec<f64> = res.iter().map(|r| r.agreement).collect();
        metrics.push(("median_agreement".to_string(), median(&acc).unwrap_or(0.0)));
        Ok(metrics)
    };
    let summary = simulate_trials(cfg.seed, n, experiment)?;
    let mut text = format!("trials={n}\n");
    for m in &summary {
        writeln!(text, "{}={:.6} +- {:.6}", m.name, m.mean, m.sd).unwrap();
    }
    write_text(&a.common.out_dir.join("trials.txt"), &text)?;
    print!("{text}");
    Ok(())
}
