//! The `dfm` command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dfm_core::augment::{augmented_cost_volume, AugmentationSpec};
use dfm_core::closed_form::{general_two_view_depth, moving_center_depth, ClosedFormError, Correspondence};
use dfm_core::config::DfmConfig;
use dfm_core::fusion::{
    depth_ce_loss, distribution_confidence, fuse, ground_plane_depth, mono_prior_distribution, stereo_confidence,
    FusionError, FusionWeights,
};
use dfm_core::geometry::{Intrinsics, RigidMotion, Vector3};
use dfm_core::image::{Image, ImageBuffer};
use dfm_core::metrics::{depth_error_metrics, DepthErrorReport, MetricsError, THRESHOLDS};
use dfm_core::plane_sweep::{compute_cost_volume, CostKind, DepthDistribution, DepthLevels, DepthReadout};
use dfm_core::pose::{gradient_check, optimize_pose, synthesize_view, PhotometricObjective, PoseError, PoseParams};
use dfm_core::synth::{relative_motion, render, sample_correspondences, Scene, SynthError};
use dfm_core::voxel::{collapse_bev, sample_voxels, BevMode, VoxelGridSpec};
use serde_json::json;
use thiserror::Error;

use crate::calib::{format_calibration, load_intrinsics, CalibError};
use crate::format::FormatError;
use crate::posefile::{format_poses, parse_pose, parse_poses, PoseFileError};
use crate::{distfile, imageio, pfm, pnm, voxelfile};

/// Failure of one command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or inconsistent input; exit code 2.
    #[error("{0}")]
    Input(String),
    /// The computation itself failed; exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}
input_error!(FormatError, CalibError, PoseFileError, dfm_core::plane_sweep::SweepError, dfm_core::voxel::VoxelError);

impl From<PoseError> for CliError {
    fn from(e: PoseError) -> Self {
        match e {
            PoseError::Diverged { .. } | PoseError::DegenerateOverlap { .. } | PoseError::EmptyMask => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::NoValidPixels => CliError::Numerical(e.to_string()),
            MetricsError::SizeMismatch => CliError::Input(e.to_string()),
        }
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::NoValidPixels => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InsufficientVisibility { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "dfm",
    version,
    about = "Two-view depth from motion: plane sweep, closed-form depth, pose and voxel lifting"
)]
pub struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON configuration; keys it omits keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene from a list of camera poses.
    Synth(SynthArgs),
    /// Plane-sweep depth between two frames.
    Depth(DepthArgs),
    /// Closed-form depth of matched points.
    DepthClosedForm(ClosedFormArgs),
    /// Fuse a stereo distribution with a monocular prior.
    Fuse(FuseArgs),
    /// Estimate the relative pose from photometric error.
    Pose(PoseArgs),
    /// Synthesize frame t from the previous frame.
    Warp(WarpArgs),
    /// Lift a depth distribution onto a voxel grid.
    Lift(LiftArgs),
    /// Depth error statistics against ground truth.
    Eval(EvalArgs),
    /// Depth cross-entropy of a distribution against ground truth.
    Loss(LossArgs),
}

#[derive(Debug, Args)]
pub struct CameraArgs {
    /// KITTI-style calibration file.
    #[arg(long)]
    pub calib: PathBuf,
    /// Camera index in the calibration file (default: 2, else the first).
    #[arg(long)]
    pub camera: Option<usize>,
}

impl CameraArgs {
    fn intrinsics(&self) -> Result<Intrinsics> {
        Ok(load_intrinsics(&self.calib, self.camera)?)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene description (JSON).
    #[arg(long)]
    pub scene: PathBuf,
    /// World-to-camera pose of every frame, one per line.
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Calibration to render with (default: f = 707 at the image center).
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long, default_value_t = 1248)]
    pub width: usize,
    #[arg(long, default_value_t = 320)]
    pub height: usize,
    /// Correspondences sampled per consecutive frame pair.
    #[arg(long, default_value_t = 200)]
    pub corr: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReadoutArg {
    Argmax,
    Refined,
    Expectation,
}

impl From<ReadoutArg> for DepthReadout {
    fn from(r: ReadoutArg) -> Self {
        match r {
            ReadoutArg::Argmax => DepthReadout::Argmax { refine: false },
            ReadoutArg::Refined => DepthReadout::Argmax { refine: true },
            ReadoutArg::Expectation => DepthReadout::Expectation,
        }
    }
}

#[derive(Debug, Args)]
pub struct DepthArgs {
    #[arg(long)]
    pub img_t: PathBuf,
    #[arg(long)]
    pub img_prev: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Motion taking frame t into the previous frame.
    #[arg(long)]
    pub pose: PathBuf,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub dmin: Option<f64>,
    #[arg(long)]
    pub dmax: Option<f64>,
    #[arg(long, value_enum)]
    pub cost: Option<CostArg>,
    #[arg(long)]
    pub temp: Option<f64>,
    /// Augmentation applied to the frame-t image (JSON).
    #[arg(long)]
    pub aug_t: Option<PathBuf>,
    /// Augmentation applied to the previous image (JSON).
    #[arg(long)]
    pub aug_prev: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReadoutArg::Refined)]
    pub readout: ReadoutArg,
    /// Depth map output (PFM).
    #[arg(long)]
    pub out: PathBuf,
    /// Metadata output (default: the depth path with a .json extension).
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Also write the depth distribution.
    #[arg(long)]
    pub dist: Option<PathBuf>,
    /// Also write the per-pixel stereo confidence (PFM).
    #[arg(long)]
    pub conf: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CostArg {
    Zncc,
    Sad,
    Ssd,
}

impl From<CostArg> for CostKind {
    fn from(c: CostArg) -> Self {
        match c {
            CostArg::Zncc => CostKind::Zncc,
            CostArg::Sad => CostKind::Sad,
            CostArg::Ssd => CostKind::Ssd,
        }
    }
}

#[derive(Debug, Args)]
pub struct ClosedFormArgs {
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Motion taking frame 1 into frame 2.
    #[arg(long)]
    pub pose: PathBuf,
    /// CSV with columns u1,v1,u2,v2.
    #[arg(long)]
    pub corr: PathBuf,
    /// Translation of a moving object, in frame-2 coordinates.
    #[arg(long, num_args = 3, value_names = ["TX", "TY", "TZ"], allow_negative_numbers = true)]
    pub object_t: Option<Vec<f64>>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Stereo distribution file, or a stereo depth map (PFM).
    #[arg(long)]
    pub stereo: PathBuf,
    /// Monocular depth map (PFM), or `ground` for the ground-plane prior.
    #[arg(long)]
    pub mono: String,
    /// Fusion weight map (PFM), or `auto` to derive it from the stereo
    /// distribution.
    #[arg(long, default_value = "auto")]
    pub conf: String,
    /// Needed by `--mono ground`.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long)]
    pub camera: Option<usize>,
    #[arg(long, value_enum, default_value_t = ReadoutArg::Refined)]
    pub readout: ReadoutArg,
    /// Fused depth output (PFM).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the fused distribution.
    #[arg(long)]
    pub dist_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoseArgs {
    #[arg(long)]
    pub img_t: PathBuf,
    #[arg(long)]
    pub img_prev: PathBuf,
    /// Frame-t depth (PFM).
    #[arg(long)]
    pub depth: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Initial motion (default: identity).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Estimated motion output (pose file).
    #[arg(long)]
    pub out: PathBuf,
    /// Diagnostics output (default: stdout).
    #[arg(long)]
    pub diag: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[arg(long)]
    pub img_prev: PathBuf,
    #[arg(long)]
    pub depth: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[arg(long)]
    pub pose: PathBuf,
    /// Synthesized image (PGM).
    #[arg(long)]
    pub out: PathBuf,
    /// Validity mask (PGM, 255 = valid).
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BevArg {
    Max,
    Mean,
    Stack,
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    #[arg(long)]
    pub dist: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[arg(long)]
    pub voxel: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_negative_numbers = true)]
    pub xr: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_negative_numbers = true)]
    pub yr: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_negative_numbers = true)]
    pub zr: Option<Vec<f64>>,
    /// Raw grid output; the JSON header goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub bev: Option<BevArg>,
    /// BEV output (default: the grid path with a .bev.bin suffix).
    #[arg(long)]
    pub bev_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted depth (PFM).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth depth (PFM); non-finite or non-positive is missing.
    #[arg(long)]
    pub gt: PathBuf,
    /// Foreground mask image; nonzero is foreground.
    #[arg(long)]
    pub fg_mask: Option<PathBuf>,
    /// Object label image; 0 is background.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// JSON report (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the statistics as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Predicted distribution file.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub fg_mask: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub fg_weight: Option<f64>,
    #[arg(long)]
    pub bg_weight: Option<f64>,
    /// Per-pixel loss output (PFM).
    #[arg(long)]
    pub per_pixel: Option<PathBuf>,
    /// JSON result (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses nothing; runs an already parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(input("--threads must be at least 1"));
        }
        // a second call in one process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = match &cli.config {
        Some(path) => {
            let text = read_text(path)?;
            serde_json::from_str::<DfmConfig>(&text).map_err(|e| input(format!("{}: {e}", path.display())))?
        }
        None => DfmConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Depth(a) => depth(&a, &config),
        Command::DepthClosedForm(a) => depth_closed_form(&a, &config),
        Command::Fuse(a) => fuse_cmd(&a, &config),
        Command::Pose(a) => pose(&a, &config),
        Command::Warp(a) => warp(&a),
        Command::Lift(a) => lift(&a, &config),
        Command::Eval(a) => eval(&a),
        Command::Loss(a) => loss(&a, &config),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn read_pose(path: &Path) -> Result<RigidMotion> {
    Ok(parse_pose(&read_text(path)?)?)
}

fn read_depth(path: &Path) -> Result<ImageBuffer> {
    Ok(pfm::read_pfm(path)?)
}

fn read_aug(path: Option<&PathBuf>, img: &ImageBuffer) -> Result<AugmentationSpec> {
    let Some(path) = path else {
        return Ok(AugmentationSpec::identity(img.width(), img.height()));
    };
    let aug: AugmentationSpec =
        serde_json::from_str(&read_text(path)?).map_err(|e| input(format!("{}: {e}", path.display())))?;
    if !(aug.scale >= dfm_core::augment::MIN_SCALE && aug.scale <= dfm_core::augment::MAX_SCALE) {
        return Err(input(format!("{}: scale {} out of range", path.display(), aug.scale)));
    }
    if (aug.crop.width, aug.crop.height) != (img.width(), img.height()) {
        return Err(input(format!(
            "{}: crop is {}x{} but the image is {}x{}",
            path.display(),
            aug.crop.width,
            aug.crop.height,
            img.width(),
            img.height()
        )));
    }
    Ok(aug)
}

fn same_size<A: Copy, B: Copy>(a: &Image<A>, b: &Image<B>, what: &str) -> Result<()> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(input(format!("{what}: {}x{} vs {}x{}", a.width(), a.height(), b.width(), b.height())))
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let scene: Scene =
        serde_json::from_str(&read_text(&a.scene)?).map_err(|e| input(format!("{}: {e}", a.scene.display())))?;
    scene.validate()?;
    let poses = parse_poses(&read_text(&a.poses)?)?;
    if poses.is_empty() {
        return Err(input(format!("{}: no poses", a.poses.display())));
    }
    if a.width == 0 || a.height == 0 {
        return Err(input("image size must be positive"));
    }
    let cam = match &a.calib {
        Some(p) => load_intrinsics(p, None)?,
        None => Intrinsics::with_focal(707.0, (a.width as f64 - 1.0) / 2.0, (a.height as f64 - 1.0) / 2.0)
            .expect("positive focal"),
    };
    std::fs::create_dir_all(&a.out).map_err(|e| input(format!("{}: {e}", a.out.display())))?;
    let path = |name: String| a.out.join(name);
    write_text(&path("calib.txt".into()), &format_calibration("P2", &cam))?;
    let mut frames = Vec::new();
    for (k, p) in poses.iter().enumerate() {
        let (img, depth) = render(&scene, &cam, a.width, a.height, p);
        pnm::write_ppm(&path(format!("frame_{k:03}.ppm")), &img)?;
        pfm::write_pfm(&path(format!("frame_{k:03}.pfm")), &img)?;
        pfm::write_pfm(&path(format!("depth_{k:03}.pfm")), &depth)?;
        write_text(&path(format!("pose_{k:03}.txt")), &format_poses(&[*p], Some("world to camera")))?;
        let mut frame = json!({
            "image": format!("frame_{k:03}.ppm"),
            "image_float": format!("frame_{k:03}.pfm"),
            "depth": format!("depth_{k:03}.pfm"),
        });
        if k > 0 {
            let motion = relative_motion(p, &poses[k - 1]);
            write_text(
                &path(format!("motion_{k:03}.txt")),
                &format_poses(&[motion], Some(&format!("frame {k} to frame {}", k - 1))),
            )?;
            let samples =
                sample_correspondences(&scene, &cam, a.width, a.height, p, &poses[k - 1], a.corr, a.seed + k as u64)?;
            let mut csv = String::from("u1,v1,u2,v2,d1,d2\n");
            for s in &samples {
                let c = s.corr;
                let _ = writeln!(csv, "{},{},{},{},{},{}", c.u1, c.v1, c.u2, c.v2, s.depth_a, s.depth_b);
            }
            write_text(&path(format!("corr_{k:03}.csv")), &csv)?;
            frame["motion"] = json!(format!("motion_{k:03}.txt"));
            frame["correspondences"] = json!(format!("corr_{k:03}.csv"));
        }
        frames.push(frame);
    }
    let meta = json!({
        "width": a.width,
        "height": a.height,
        "calibration": "calib.txt",
        "frames": frames,
    });
    write_text(&path("meta.json".into()), &pretty(&meta))
}

fn depth(a: &DepthArgs, config: &DfmConfig) -> Result<()> {
    let cam = a.camera.intrinsics()?;
    let img_t = imageio::read_gray(&a.img_t)?;
    let img_prev = imageio::read_gray(&a.img_prev)?;
    let motion = read_pose(&a.pose)?;
    let mut lc = config.levels;
    lc.count = a.levels.unwrap_or(lc.count);
    lc.d_min = a.dmin.unwrap_or(lc.d_min);
    lc.d_max = a.dmax.unwrap_or(lc.d_max);
    let levels = lc.levels()?;
    let mut sweep = config.sweep;
    if let Some(c) = a.cost {
        sweep.cost = c.into();
    }
    sweep.temperature = a.temp.unwrap_or(sweep.temperature);
    let augmented = a.aug_t.is_some() || a.aug_prev.is_some();
    let vol = if augmented {
        let aug_t = read_aug(a.aug_t.as_ref(), &img_t)?;
        let aug_prev = read_aug(a.aug_prev.as_ref(), &img_prev)?;
        augmented_cost_volume(&img_t, &img_prev, &aug_t, &aug_prev, &cam, &motion, &levels, &sweep)
    } else {
        compute_cost_volume(&img_t, &img_prev, &cam, &motion, &levels, &sweep)?
    };
    let mask_fraction = vol.mask_fraction();
    if let Some(p) = &a.conf {
        pfm::write_pfm(p, &stereo_confidence(&vol).to_image())?;
    }
    let dist = vol.into_distribution(sweep.temperature)?;
    let depth = dist.to_depth(a.readout.into());
    pfm::write_pfm(&a.out, &depth)?;
    if let Some(p) = &a.dist {
        distfile::write_distribution(p, &dist)?;
    }
    let valid = depth.as_slice().iter().filter(|d| d.is_finite()).count();
    let meta = json!({
        "width": depth.width(),
        "height": depth.height(),
        "levels": { "d_min": levels.d_min(), "d_max": levels.d_max(), "count": levels.count(), "step": levels.step() },
        "cost": sweep.cost,
        "patch_radius": sweep.patch_radius,
        "temperature": sweep.temperature,
        "readout": format!("{:?}", a.readout).to_lowercase(),
        "augmented": augmented,
        "mask_fraction": mask_fraction,
        "valid_pixels": valid,
    });
    let meta_path = a.meta.clone().unwrap_or_else(|| a.out.with_extension("json"));
    write_text(&meta_path, &pretty(&meta))
}

fn depth_closed_form(a: &ClosedFormArgs, config: &DfmConfig) -> Result<()> {
    let cam = a.camera.intrinsics()?;
    let motion = read_pose(&a.pose)?;
    let object = a.object_t.as_ref().map(|t| Vector3::new(t[0], t[1], t[2]));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(&a.corr)
        .map_err(|e| input(format!("{}: {e}", a.corr.display())))?;
    let headers = reader.headers().map_err(|e| input(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| input(format!("{}: missing column {name}", a.corr.display())))
    };
    let cols = [col("u1")?, col("v1")?, col("u2")?, col("v2")?];
    let mut out = String::from("u1,v1,u2,v2,D1_u,D1_v,D2,flags\n");
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| input(format!("{}: {e}", a.corr.display())))?;
        let mut v = [0.0f64; 4];
        for (slot, &c) in v.iter_mut().zip(&cols) {
            let field = record.get(c).unwrap_or("");
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| input(format!("{} row {}: {field:?} is not a number", a.corr.display(), row + 2)))?;
        }
        let corr = Correspondence { u1: v[0], v1: v[1], u2: v[2], v2: v[3] };
        let sol = match object {
            Some(t) => moving_center_depth(&cam, &motion, &t, &corr, &config.closed_form),
            None => general_two_view_depth(&cam, &motion, &corr, &config.closed_form),
        };
        let fmt = |d: Option<f64>| d.map(|d| d.to_string()).unwrap_or_else(|| "nan".into());
        let (du, dv, d2, flags) = match sol {
            Ok(s) => {
                let mut flags = Vec::new();
                if s.from_u.is_none() {
                    flags.push("u_degenerate");
                }
                if s.from_v.is_none() {
                    flags.push("v_degenerate");
                }
                if s.non_physical() {
                    flags.push("non_physical");
                }
                if flags.is_empty() {
                    flags.push("ok");
                }
                (s.from_u.map(|f| f.depth), s.from_v.map(|f| f.depth), Some(s.depth2()), flags.join("|"))
            }
            Err(ClosedFormError::NoValidSolution) => (None, None, None, "no_solution".into()),
            Err(e) => return Err(CliError::Numerical(e.to_string())),
        };
        let _ = writeln!(out, "{},{},{},{},{},{},{},{}", v[0], v[1], v[2], v[3], fmt(du), fmt(dv), fmt(d2), flags);
    }
    emit(a.out.as_deref(), &out)
}

fn fuse_cmd(a: &FuseArgs, config: &DfmConfig) -> Result<()> {
    let bytes = std::fs::read(&a.stereo).map_err(|e| input(format!("{}: {e}", a.stereo.display())))?;
    let from_distribution = bytes.starts_with(distfile::MAGIC);
    let stereo = if from_distribution {
        distfile::decode_distribution(&bytes)?
    } else {
        let levels = config.levels.levels()?;
        mono_prior_distribution(&pfm::decode_pfm(&bytes)?, &levels, config.fusion.mono_sharpness)
    };
    let levels = *stereo.levels();
    let (w, h) = (stereo.width(), stereo.height());
    let mono_depth = if a.mono == "ground" {
        let calib = a.calib.as_ref().ok_or_else(|| input("--mono ground needs --calib"))?;
        let cam = load_intrinsics(calib, a.camera)?;
        ground_plane_depth(&cam, w, h, config.fusion.camera_height, &levels)
    } else {
        read_depth(Path::new(&a.mono))?
    };
    if (mono_depth.width(), mono_depth.height()) != (w, h) {
        return Err(input(format!(
            "mono prior is {}x{} but the stereo input is {w}x{h}",
            mono_depth.width(),
            mono_depth.height()
        )));
    }
    let mono = mono_prior_distribution(&mono_depth, &levels, config.fusion.mono_sharpness);
    let weights = if a.conf == "auto" {
        if !from_distribution {
            return Err(input("--conf auto needs a stereo distribution, not a depth map"));
        }
        distribution_confidence(&stereo)
    } else {
        let img = read_depth(Path::new(&a.conf))?;
        FusionWeights::per_pixel(img)?
    };
    let fused = fuse(&mono, &stereo, &weights)?;
    pfm::write_pfm(&a.out, &fused.to_depth(a.readout.into()))?;
    if let Some(p) = &a.dist_out {
        distfile::write_distribution(p, &fused)?;
    }
    Ok(())
}

fn pose(a: &PoseArgs, config: &DfmConfig) -> Result<()> {
    let cam = a.camera.intrinsics()?;
    let img_t = imageio::read_gray(&a.img_t)?;
    let img_prev = imageio::read_gray(&a.img_prev)?;
    let depth = read_depth(&a.depth)?;
    same_size(&img_t, &img_prev, "images differ in size")?;
    same_size(&img_t, &depth, "depth and image differ in size")?;
    let init = match &a.init {
        Some(p) => read_pose(p)?,
        None => RigidMotion::identity(),
    };
    let est = optimize_pose(&img_t, &img_prev, &depth, &cam, &config.pose, &init)?;
    write_text(&a.out, &format_poses(&[est.motion], Some("estimated motion, frame t to previous frame")))?;
    let (yaw, pitch, roll) = est.motion.euler_zyx();
    let diag = json!({
        "translation": [est.motion.translation.x, est.motion.translation.y, est.motion.translation.z],
        "quaternion_wxyz": est.motion.quaternion_wxyz(),
        "euler_zyx_deg": [yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees()],
        "diagnostics": est.diagnostics,
    });
    emit(a.diag.as_deref(), &pretty(&diag))
}

fn warp(a: &WarpArgs) -> Result<()> {
    let cam = a.camera.intrinsics()?;
    let img_prev = imageio::read_gray(&a.img_prev)?;
    let depth = read_depth(&a.depth)?;
    same_size(&img_prev, &depth, "depth and image differ in size")?;
    let motion = read_pose(&a.pose)?;
    let (img, mask) = synthesize_view(&img_prev, &depth, &cam, &motion)?;
    pnm::write_pgm(&a.out, &img)?;
    if let Some(p) = &a.mask_out {
        imageio::write_mask(p, &mask)?;
    }
    Ok(())
}

fn range(v: &Option<Vec<f64>>, default: [f64; 2]) -> [f64; 2] {
    v.as_ref().map(|r| [r[0], r[1]]).unwrap_or(default)
}

fn lift(a: &LiftArgs, config: &DfmConfig) -> Result<()> {
    let cam = a.camera.intrinsics()?;
    let dist = distfile::read_distribution(&a.dist)?;
    let d = config.voxel;
    let spec = VoxelGridSpec {
        x_range: range(&a.xr, d.x_range),
        y_range: range(&a.yr, d.y_range),
        z_range: range(&a.zr, d.z_range),
        voxel_size: a.voxel.unwrap_or(d.voxel_size),
    };
    for r in [spec.x_range, spec.y_range, spec.z_range] {
        if !(r[0] < r[1]) {
            return Err(input(format!("empty range [{}, {}]", r[0], r[1])));
        }
    }
    let grid = sample_voxels(&dist, &cam, &spec)?;
    voxelfile::write_voxel_grid(&a.out, &grid)?;
    if let Some(mode) = a.bev {
        let mode = match mode {
            BevArg::Max => BevMode::Max,
            BevArg::Mean => BevMode::Mean,
            BevArg::Stack => BevMode::Stack,
        };
        let bev = collapse_bev(&grid, mode);
        let path = a.bev_out.clone().unwrap_or_else(|| a.out.with_extension("bev.bin"));
        voxelfile::write_bev(&path, &bev, &spec)?;
    }
    Ok(())
}

fn report_csv(r: &DepthErrorReport) -> String {
    let mut s = String::from("scope,count,median");
    for t in THRESHOLDS {
        let _ = write!(s, ",above_{t}");
    }
    s.push('\n');
    let mut row = |scope: &str, count: usize, median: f64, ratios: &[f64; 4]| {
        let _ = write!(s, "{scope},{count},{median}");
        for v in ratios {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    };
    row("all", r.all.count, r.all.median, &r.all.ratios);
    if let Some(f) = &r.foreground_pooled {
        row("foreground_pooled", f.count, f.median, &f.ratios);
    }
    if let Some(f) = &r.foreground_per_object {
        row("foreground_per_object", f.objects, f.median, &f.ratios);
    }
    s
}

fn eval(a: &EvalArgs) -> Result<()> {
    let pred = read_depth(&a.pred)?;
    let gt = read_depth(&a.gt)?;
    let mask = a.fg_mask.as_deref().map(imageio::read_mask).transpose()?;
    let labels = a.labels.as_deref().map(imageio::read_integer_map).transpose()?;
    let report = depth_error_metrics(&pred, &gt, mask.as_ref(), labels.as_ref())?;
    if let Some(p) = &a.csv {
        write_text(p, &report_csv(&report))?;
    }
    emit(a.out.as_deref(), &pretty(&report))
}

fn loss(a: &LossArgs, config: &DfmConfig) -> Result<()> {
    let dist: DepthDistribution = distfile::read_distribution(&a.pred)?;
    let gt = read_depth(&a.gt)?;
    let mask = a.fg_mask.as_deref().map(imageio::read_mask).transpose()?;
    let mut cfg = config.depth_loss;
    cfg.gamma = a.gamma.unwrap_or(cfg.gamma);
    cfg.fg_weight = a.fg_weight.unwrap_or(cfg.fg_weight);
    cfg.bg_weight = a.bg_weight.unwrap_or(cfg.bg_weight);
    let l = depth_ce_loss(&dist, &gt, &cfg, mask.as_ref())?;
    if let Some(p) = &a.per_pixel {
        pfm::write_pfm(p, &l.per_pixel)?;
    }
    let out = json!({ "mean": l.mean, "valid_pixels": l.valid_pixels, "config": cfg });
    emit(a.out.as_deref(), &pretty(&out))
}

/// Finite-difference check of the pose objective's gradient at `motion`.
pub fn pose_gradient_residual(
    img_t: &ImageBuffer,
    img_prev: &ImageBuffer,
    depth: &ImageBuffer,
    cam: &Intrinsics,
    alpha: f64,
    motion: &RigidMotion,
    h: f64,
) -> Result<f64> {
    let obj = PhotometricObjective::new(img_t, img_prev, depth, cam, alpha)?;
    Ok(gradient_check(&obj, &PoseParams::from_motion(motion), h)?.relative_error)
}

#[allow(dead_code)]
fn levels_of(dist: &DepthDistribution) -> DepthLevels {
    *dist.levels()
}
