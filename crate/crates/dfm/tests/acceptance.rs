//! End-to-end acceptance checks, one line of output per criterion.
//!
//! Runs without the libtest harness so every criterion reports even when an
//! earlier one fails; the process exits nonzero if any failed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use dfm::calib::{parse_calibration, select_camera, CalibError, MalformedReason};
use dfm::pfm::{decode_pfm, encode_pfm};
use dfm_core::augment::{apply_augmentation, augmented_cost_volume, AugmentationSpec};
use dfm_core::closed_form::{
    binocular_depth, effective_baseline, general_two_view_depth, parallel_two_view_depth, ClosedFormConfig,
    Correspondence,
};
use dfm_core::fusion::{
    depth_ce_loss, fuse, ground_plane_depth, mono_prior_distribution, stereo_confidence, DepthLossConfig,
};
use dfm_core::geometry::{Intrinsics, Point3, RigidMotion, Vector3};
use dfm_core::image::{depth_is_valid, DepthMap, Image};
use dfm_core::metrics::depth_error_metrics;
use dfm_core::plane_sweep::{compute_cost_volume, DepthDistribution, DepthLevels, DepthReadout, SweepConfig};
use dfm_core::pose::{gradient_check, optimize_pose, ssim_map, PhotometricObjective, PoseLossConfig, PoseParams};
use dfm_core::synth::{relative_motion, render, sample_correspondences, Primitive, Scene, Texture};
use dfm_core::voxel::{sample_voxels, FnFrustum, VoxelGridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WIDTH: usize = 1248;
const HEIGHT: usize = 320;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn kitti_cam() -> Intrinsics {
    Intrinsics::new(707.0, 707.0, 601.0, 160.0).unwrap()
}

fn levels() -> DepthLevels {
    DepthLevels::from_range(2.0, 59.6, 288).unwrap()
}

fn noise(cell: f64, seed: u64, octaves: usize) -> Texture {
    Texture::Noise { cell, seed, octaves, low: 0.05, high: 0.95 }
}

fn scene(primitives: Vec<Primitive>) -> Scene {
    Scene { primitives, background: 0.5, supersample: false }
}

fn street(road: Texture) -> Scene {
    let boxed = |min, max, seed| Primitive::Box { min, max, texture: noise(0.3, seed, 3) };
    scene(vec![
        Primitive::Plane { point: [0.0, 1.65, 10.0], normal: [0.0, -1.0, 0.0], half_extent: None, texture: road },
        Primitive::FrontoPlane { depth: 45.0, bounds: None, texture: noise(1.5, 12, 3) },
        boxed([-4.0, -0.5, 12.0], [-2.0, 1.65, 16.0], 13),
        boxed([2.5, -1.0, 18.0], [5.0, 1.65, 22.0], 14),
        boxed([-1.0, 0.2, 26.0], [1.5, 1.65, 30.0], 15),
    ])
}

fn open_road() -> Scene {
    scene(vec![
        Primitive::Plane {
            point: [0.0, 1.65, 15.0],
            normal: [0.0, -1.0, 0.0],
            half_extent: Some([40.0, 15.0]),
            texture: noise(1.5, 11, 2),
        },
        Primitive::FrontoPlane { depth: 45.0, bounds: None, texture: noise(3.0, 12, 2) },
    ])
}

fn textured_plane(depth: f64) -> Scene {
    scene(vec![Primitive::FrontoPlane { depth, bounds: None, texture: noise(0.15, 7, 2) }])
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn mean(img: &Image<f32>) -> f64 {
    img.as_slice().iter().map(|&v| v as f64).sum::<f64>() / img.len() as f64
}

fn closed_form_reduction() -> Outcome {
    let cfg = ClosedFormConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 1000 {
        let f = rng.random_range(300.0..1200.0);
        let cam = Intrinsics::with_focal(f, rng.random_range(300.0..700.0), rng.random_range(100.0..250.0)).unwrap();
        let p = Point3::new(rng.random_range(-15.0..15.0), rng.random_range(-2.0..3.0), rng.random_range(4.0..60.0));
        let dx = rng.random_range(0.1..1.0);
        let dd = rng.random_range(-2.0..2.0);
        let motion = RigidMotion::from_translation(Vector3::new(-dx, 0.0, -dd));
        let (Ok((a, _)), Ok((b, _))) = (cam.project(&p), cam.project(&motion.transform_point(&p))) else {
            continue;
        };
        let corr = Correspondence { u1: a.u, v1: a.v, u2: b.u, v2: b.v };
        let (Ok(general), Ok(parallel)) =
            (general_two_view_depth(&cam, &motion, &corr, &cfg), parallel_two_view_depth(&cam, a.u, b.u, dx, dd, &cfg))
        else {
            continue;
        };
        let Some(from_u) = general.from_u else { continue };
        let lateral = RigidMotion::from_translation(Vector3::new(-dx, 0.0, 0.0));
        let (b, _) = cam.project(&lateral.transform_point(&p)).map_err(|e| e.to_string())?;
        let flat = parallel_two_view_depth(&cam, a.u, b.u, dx, 0.0, &cfg).map_err(|e| e.to_string())?;
        let binocular = binocular_depth(f, dx, a.u - b.u, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(rel(from_u.depth, parallel)).max(rel(flat, binocular));
        checked += 1;
    }
    ensure!(worst < 1e-9, "worst relative error {worst:e}");
    Ok(format!("1000 inputs, worst relative error {worst:.1e}"))
}

fn oracle_recovery() -> Outcome {
    let cam = kitti_cam();
    let scene = street(noise(0.4, 11, 3));
    let cfg = ClosedFormConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut checked, mut seed, mut worst) = (0, 0u64, 0.0f64);
    while checked < 1000 {
        seed += 1;
        let rot =
            Vector3::new(rng.random_range(-0.03..0.03), rng.random_range(-0.05..0.05), rng.random_range(-0.02..0.02));
        let t = Vector3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.1..0.1), rng.random_range(-1.5..1.5));
        if t.norm() < 0.3 {
            continue;
        }
        let pose_b = RigidMotion::from_rotation_vector(rot, t);
        let motion = relative_motion(&RigidMotion::identity(), &pose_b);
        let samples = sample_correspondences(&scene, &cam, WIDTH, HEIGHT, &RigidMotion::identity(), &pose_b, 20, seed)
            .map_err(|e| e.to_string())?;
        for s in samples {
            let sol = general_two_view_depth(&cam, &motion, &s.corr, &cfg).map_err(|e| e.to_string())?;
            worst = worst.max(rel(sol.depth1(), s.depth_a)).max(rel(sol.depth2(), s.depth_b));
            checked += 1;
        }
    }
    ensure!(worst < 1e-6, "worst relative error {worst:e}");
    Ok(format!("{checked} points, worst relative error {worst:.1e}"))
}

fn baseline_arithmetic() -> Outcome {
    let cam = Intrinsics::with_focal(700.0, 600.0, 180.0).unwrap();
    let a = effective_baseline(0.0, 5.4, cam.cu + 70.0, &cam).abs();
    let b = effective_baseline(0.0, 2.7, cam.cu + 140.0, &cam).abs();
    ensure!(a == 0.54 && b == 0.54, "got {a} and {b}");
    Ok("both forms give exactly 0.54".into())
}

fn plane_sweep_recovery() -> Outcome {
    let cam = kitti_cam();
    let scene = textured_plane(20.0);
    let lateral = RigidMotion::from_translation(Vector3::new(0.54, 0.0, 0.0));
    let (img_t, _) = render(&scene, &cam, WIDTH, HEIGHT, &RigidMotion::identity());
    let (img_prev, _) = render(&scene, &cam, WIDTH, HEIGHT, &lateral);
    let start = Instant::now();
    let vol = compute_cost_volume(&img_t, &img_prev, &cam, &lateral, &levels(), &SweepConfig::default())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let depth = vol.winner_take_all(false);
    let valid: Vec<f32> = depth.as_slice().iter().copied().filter(|d| d.is_finite()).collect();
    let good = valid.iter().filter(|d| (**d as f64 - 20.0).abs() <= levels().step() + 1e-9).count();
    let fraction = good as f64 / valid.len() as f64;
    ensure!(valid.len() > WIDTH * HEIGHT / 2, "only {} valid pixels", valid.len());
    ensure!(fraction >= 0.95, "{:.2}% within one bin", fraction * 100.0);
    ensure!(elapsed < 30.0, "sweep took {elapsed:.1} s");
    Ok(format!("{:.2}% within one bin, sweep {elapsed:.2} s at {HEIGHT}x{WIDTH}", fraction * 100.0))
}

fn zero_baseline() -> Outcome {
    let (w, h) = (WIDTH / 4, HEIGHT / 4);
    let cam = kitti_cam().scaled(0.25);
    let (img, _) = render(&textured_plane(20.0), &cam, w, h, &RigidMotion::identity());
    let id = RigidMotion::identity();
    let vol =
        compute_cost_volume(&img, &img, &cam, &id, &levels(), &SweepConfig::default()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let c: Vec<f64> = vol.pixel(x, y).iter().filter(|v| v.is_finite()).map(|&v| v as f64).collect();
            if c.is_empty() {
                continue;
            }
            let m = c.iter().sum::<f64>() / c.len() as f64;
            worst = worst.max(c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len() as f64);
        }
    }
    let conf = mean(&stereo_confidence(&vol).to_image());
    ensure!(worst < 1e-6, "cost variance {worst:e}");
    ensure!(conf < 0.1, "confidence mean {conf}");
    Ok(format!("max cost variance {worst:.1e}, confidence mean {conf:.3}"))
}

fn agreement(a: &DepthMap, b: impl Fn(usize, usize) -> Option<f32>, tol: f64) -> f64 {
    let (mut n, mut ok) = (0usize, 0usize);
    for y in 0..a.height() {
        for x in 0..a.width() {
            let da = a.get(x, y);
            if let Some(db) = b(x, y).filter(|d| depth_is_valid(*d)) {
                if depth_is_valid(da) {
                    n += 1;
                    ok += usize::from((da as f64 - db as f64).abs() <= tol);
                }
            }
        }
    }
    ok as f64 / n.max(1) as f64
}

fn augmentation_equivariance() -> Outcome {
    let (w, h) = (WIDTH, HEIGHT);
    let cam = kitti_cam();
    let scene = scene(vec![
        Primitive::FrontoPlane { depth: 18.0, bounds: None, texture: noise(0.1, 2, 2) },
        Primitive::Box { min: [-4.0, -0.5, 8.0], max: [-2.0, 1.65, 11.0], texture: noise(0.1, 3, 2) },
        Primitive::Box { min: [1.5, -1.0, 12.0], max: [4.0, 1.65, 14.0], texture: noise(0.1, 4, 2) },
    ]);
    let motion = RigidMotion::from_translation(Vector3::new(0.54, 0.0, 0.2));
    let (img_t, _) = render(&scene, &cam, w, h, &RigidMotion::identity());
    let (img_prev, _) = render(&scene, &cam, w, h, &motion);
    let cfg = SweepConfig::default();
    let plain = compute_cost_volume(&img_t, &img_prev, &cam, &motion, &levels(), &cfg)
        .map_err(|e| e.to_string())?
        .winner_take_all(false);
    // adjacent bins differ by the step up to f32 rounding
    let tol = levels().step() * (1.0 + 1e-6);

    let flip = AugmentationSpec::identity(w, h).with_flip(true);
    let ft = apply_augmentation(&img_t, &flip).map_err(|e| e.to_string())?;
    let fp = apply_augmentation(&img_prev, &flip).map_err(|e| e.to_string())?;
    let flipped = augmented_cost_volume(&ft, &fp, &flip, &flip, &cam, &motion, &levels(), &cfg).winner_take_all(false);
    let f = agreement(&flipped, |x, y| Some(plain.get(w - 1 - x, y)), tol);

    let scale = AugmentationSpec::rescale(w, h, 1.05);
    let st = apply_augmentation(&img_t, &scale).map_err(|e| e.to_string())?;
    let sp = apply_augmentation(&img_prev, &scale).map_err(|e| e.to_string())?;
    let scaled = augmented_cost_volume(&st, &sp, &scale, &scale, &cam, &motion, &levels(), &cfg).winner_take_all(false);
    let back = scale.augmented_to_canonical();
    let s = agreement(
        &scaled,
        |x, y| {
            let p = back.apply(dfm_core::Pixel::new(x as f64, y as f64));
            let (u, v) = (p.u.round(), p.v.round());
            (u >= 0.0 && v >= 0.0 && (u as usize) < w && (v as usize) < h).then(|| plain.get(u as usize, v as usize))
        },
        tol,
    );
    ensure!(f >= 0.99 && s >= 0.95, "flip {:.2}%, rescale {:.2}%", f * 100.0, s * 100.0);
    Ok(format!("flip {:.2}%, 1.05x rescale {:.2}% within one bin", f * 100.0, s * 100.0))
}

fn fusion_directionality() -> Outcome {
    let (w, h) = (WIDTH / 2, HEIGHT / 2);
    let cam = kitti_cam().scaled(0.5);
    let scene = street(Texture::Constant { value: 0.4 });
    let motion = RigidMotion::from_translation(Vector3::new(0.54, 0.0, 0.2));
    let (img_t, gt) = render(&scene, &cam, w, h, &RigidMotion::identity());
    let (img_prev, _) = render(&scene, &cam, w, h, &motion);
    let vol = compute_cost_volume(&img_t, &img_prev, &cam, &motion, &levels(), &SweepConfig::default())
        .map_err(|e| e.to_string())?;
    let omega = stereo_confidence(&vol);
    let stereo = vol.into_distribution(0.1).map_err(|e| e.to_string())?;
    let mono = mono_prior_distribution(&ground_plane_depth(&cam, w, h, 1.65, &levels()), &levels(), 2.0);
    let fused = fuse(&mono, &stereo, &omega).map_err(|e| e.to_string())?;
    let readout = DepthReadout::Argmax { refine: false };
    let median = |d: &DepthMap| depth_error_metrics(d, &gt, None, None).map(|r| r.all.median);
    let m = median(&mono.to_depth(readout)).map_err(|e| e.to_string())?;
    let s = median(&stereo.to_depth(readout)).map_err(|e| e.to_string())?;
    let f = median(&fused.to_depth(readout)).map_err(|e| e.to_string())?;
    ensure!(s < m, "stereo {s} not below mono {m}");
    ensure!(f <= m.min(s) * 1.1, "fused {f} vs mono {m}, stereo {s}");
    Ok(format!("median error mono {m:.3} m, stereo {s:.3} m, fused {f:.3} m"))
}

fn pose_recovery() -> Outcome {
    let cam = kitti_cam();
    let scene = open_road();
    let t = Vector3::new(0.04, -0.01, 0.28);
    let axis = Vector3::new(0.15, 1.0, 0.05).normalize();
    let truth = RigidMotion::from_rotation_vector(axis * 2f64.to_radians(), t * (0.3 / t.norm()));
    let (img_t, depth_t) = render(&scene, &cam, WIDTH, HEIGHT, &RigidMotion::identity());
    let (img_prev, _) = render(&scene, &cam, WIDTH, HEIGHT, &truth);
    let est = optimize_pose(&img_t, &img_prev, &depth_t, &cam, &PoseLossConfig::default(), &RigidMotion::identity())
        .map_err(|e| e.to_string())?;
    let t_err = (est.motion.translation - truth.translation).norm() / truth.translation.norm();
    let r_err = est.motion.angle_to(&truth).to_degrees();

    let obj = PhotometricObjective::new(&img_t, &img_prev, &depth_t, &cam, 0.85).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = PoseParams::from_motion(&truth);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut p = base;
        for k in 0..3 {
            p.0[k] += rng.random_range(-0.1..0.1);
            p.0[k + 3] += rng.random_range(-0.02..0.02);
        }
        worst = worst.max(gradient_check(&obj, &p, 1e-5).map_err(|e| e.to_string())?.relative_error);
    }
    ensure!(t_err < 0.01 && r_err < 0.1, "translation error {:.3}%, rotation error {r_err:.4} deg", t_err * 100.0);
    ensure!(worst < 1e-3, "gradient relative error {worst:e}");
    Ok(format!(
        "translation error {:.3}%, rotation error {r_err:.4} deg, gradient error {worst:.1e} over 20 poses",
        t_err * 100.0
    ))
}

fn loss_identities() -> Outcome {
    let l = levels();
    let mut one_hot = vec![0.0f32; 288];
    one_hot[0] = 1.0;
    let one_hot = DepthDistribution::from_weights(1, 1, l, one_hot).unwrap();
    let at_bin = Image::new(1, 1, l.d_min() as f32);
    let zero = depth_ce_loss(&one_hot, &at_bin, &DepthLossConfig::default(), None).map_err(|e| e.to_string())?.mean;
    let uniform = DepthDistribution::from_weights(1, 1, l, vec![1.0; 288]).unwrap();
    let gt = Image::new(1, 1, l.depth(137) as f32);
    let plain = depth_ce_loss(&uniform, &gt, &DepthLossConfig::plain(), None).map_err(|e| e.to_string())?.mean;
    let weighted = DepthLossConfig { fg_weight: 5.0, ..DepthLossConfig::plain() };
    let fg = Image::new(1, 1, true);
    let five = depth_ce_loss(&uniform, &gt, &weighted, Some(&fg)).map_err(|e| e.to_string())?.mean;
    ensure!(zero == 0.0, "one-hot loss {zero}");
    ensure!((plain - 288f64.ln()).abs() < 1e-9, "uniform loss {plain} vs ln 288");
    ensure!(five == 5.0 * plain, "weighted {five} vs 5 x {plain}");
    Ok(format!("one-hot 0, uniform {plain:.12} (ln 288), fg weight exactly 5x"))
}

fn ssim_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut self_err, mut range_excess, mut asym) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let a = Image::from_fn(40, 30, |_, _| rng.random::<f32>());
        let b = Image::from_fn(40, 30, |_, _| rng.random::<f32>());
        let same = ssim_map(&a, &a).map_err(|e| e.to_string())?;
        self_err = same.as_slice().iter().fold(self_err, |m, s| m.max((s - 1.0).abs()));
        let ab = ssim_map(&a, &b).map_err(|e| e.to_string())?;
        let ba = ssim_map(&b, &a).map_err(|e| e.to_string())?;
        for (x, y) in ab.as_slice().iter().zip(ba.as_slice()) {
            range_excess = range_excess.max(x.abs() - 1.0);
            asym = asym.max((x - y).abs());
        }
    }
    ensure!(self_err < 1e-12, "SSIM(I, I) off by {self_err:e}");
    ensure!(range_excess <= 1e-9, "range exceeded by {range_excess:e}");
    ensure!(asym <= 1e-12, "asymmetry {asym:e}");
    Ok(format!("|SSIM(I,I) - 1| {self_err:.1e}, asymmetry {asym:.1e}"))
}

fn voxel_source(x: usize, y: usize, w: usize) -> Option<f32> {
    if (x * 7 + y * 13 + w * 3).is_multiple_of(29) {
        None
    } else {
        Some(((x * 31 + y * 17 + w * 5) % 101) as f32 / 100.0)
    }
}

/// Trilinear sample of the frustum at a voxel center, skipping holes.
fn voxel_oracle(x: f64, y: f64, z: f64, levels: &DepthLevels) -> Option<f32> {
    let cam = kitti_cam();
    if !(z >= levels.d_min() && z <= levels.d_max()) {
        return None;
    }
    let u = cam.fx * x / z + cam.cu;
    let v = cam.fy * y / z + cam.cv;
    if !(u >= 0.0 && v >= 0.0 && u <= (WIDTH - 1) as f64 && v <= (HEIGHT - 1) as f64) {
        return None;
    }
    let b = levels.bin_of(z).clamp(0.0, (levels.count() - 1) as f64);
    let split = |c: f64, n: usize| {
        let lo = (c.floor() as usize).min(n - 1);
        (lo, (lo + 1).min(n - 1), c - lo as f64)
    };
    let (x0, x1, fx) = split(u, WIDTH);
    let (y0, y1, fy) = split(v, HEIGHT);
    let (b0, b1, fb) = split(b, levels.count());
    let (mut acc, mut weight) = (0.0f64, 0.0f64);
    for (xx, wx) in [(x0, 1.0 - fx), (x1, fx)] {
        for (yy, wy) in [(y0, 1.0 - fy), (y1, fy)] {
            for (bb, wb) in [(b0, 1.0 - fb), (b1, fb)] {
                let wt = wx * wy * wb;
                if wt == 0.0 {
                    continue;
                }
                if let Some(s) = voxel_source(xx, yy, bb) {
                    acc += wt * s as f64;
                    weight += wt;
                }
            }
        }
    }
    Some(if weight > 0.0 { (acc / weight) as f32 } else { 0.0 })
}

fn voxel_oracle_match() -> Outcome {
    let levels = levels();
    let src = FnFrustum { width: WIDTH, height: HEIGHT, levels, f: voxel_source };
    let spec = VoxelGridSpec::default();
    let grid = sample_voxels(&src, &kitti_cam(), &spec).map_err(|e| e.to_string())?;
    let (nx, ny, nz) = grid.dims();
    let mut occupied = 0;
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                let [x, y, z] = spec.center(ix, iy, iz);
                let expected = voxel_oracle(x, y, z, &levels);
                let got = grid.get(ix, iy, iz);
                ensure!(
                    got.map(f32::to_bits) == expected.map(f32::to_bits),
                    "voxel ({ix}, {iy}, {iz}): {got:?} vs {expected:?}"
                );
                occupied += usize::from(expected.is_some());
            }
        }
    }
    ensure!(grid.occupied_count() == occupied, "occupancy {} vs {occupied}", grid.occupied_count());
    Ok(format!("{nx}x{ny}x{nz} grid, {occupied} occupied voxels, all bit-identical"))
}

fn io_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let img = Image::from_fn(64, 64, |_, _| f32::from_bits(rng.random::<u32>()));
        let back = decode_pfm(&encode_pfm(&img)).map_err(|e| e.to_string())?;
        let same = img.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure!(same, "PFM round trip changed bits");
    }

    let fixture = "P2: 707.0 0.0 601.0 0.0  0.0 707.0 183.0 0.0  0.0 0.0 1.0 0.0";
    let records = parse_calibration(fixture).map_err(|e| e.to_string())?;
    let cam = select_camera(&records, None).map_err(|e| e.to_string())?.intrinsics;
    ensure!((cam.fx, cam.cu, cam.cv) == (707.0, 601.0, 183.0), "fixture parsed as {cam:?}");

    let line = |reason| CalibError::MalformedLine { line: 1, reason };
    let cases: Vec<(String, CalibError)> = vec![
        ("P2 707 0 601 0 0 707 183 0 0 0 1 0".into(), line(MalformedReason::MissingSeparator)),
        (": 707 0 601 0 0 707 183 0 0 0 1 0".into(), line(MalformedReason::EmptyKey)),
        ("P2: 707 0 601".into(), line(MalformedReason::TooFewValues(3))),
        (format!("{fixture} 1"), line(MalformedReason::TooManyValues(13))),
        (
            "P2: 707 0 601 0 0 abc 183 0 0 0 1 0".into(),
            line(MalformedReason::NonNumeric { position: 6, token: "abc".into() }),
        ),
        ("P2: 707 0 601 0 0 inf 183 0 0 0 1 0".into(), line(MalformedReason::NonFinite { position: 6 })),
        ("P2: -707 0 601 0 0 707 183 0 0 0 1 0".into(), line(MalformedReason::NonPositiveFocal)),
        ("P2: 707 0.5 601 0 0 707 183 0 0 0 1 0".into(), line(MalformedReason::NotRectified)),
        (
            format!("{fixture}\n{fixture}"),
            CalibError::MalformedLine { line: 2, reason: MalformedReason::DuplicateKey("P2".into()) },
        ),
        ("# no cameras\n".into(), CalibError::MissingCamera("any".into())),
    ];
    for (text, expected) in &cases {
        let got = parse_calibration(text);
        ensure!(got.as_ref() == Err(expected), "{text:?}: expected {expected:?}, got {got:?}");
    }
    Ok(format!("100 PFM images bit-identical, fixture 707/601/183, {} malformation classes rejected", cases.len()))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("closed-form reduction chain", closed_form_reduction),
        ("oracle depth recovery", oracle_recovery),
        ("baseline arithmetic", baseline_arithmetic),
        ("plane-sweep recovery", plane_sweep_recovery),
        ("zero-baseline degeneracy", zero_baseline),
        ("augmentation equivariance", augmentation_equivariance),
        ("fusion directionality", fusion_directionality),
        ("pose recovery", pose_recovery),
        ("loss identities", loss_identities),
        ("SSIM properties", ssim_properties),
        ("frustum-to-voxel oracle", voxel_oracle_match),
        ("I/O round trips", io_round_trips),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} ({secs:.1} s)", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} ({secs:.1} s)", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
