mod common;

use common::*;
use dfm_core::geometry::RigidMotion;
use dfm_core::image::DepthMap;
use dfm_core::pose::{gradient_check, optimize_pose, PhotometricObjective, PoseEstimate, PoseLossConfig, PoseParams};
use dfm_core::synth::render;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn estimate(depth_scale: f32) -> (RigidMotion, PoseEstimate) {
    let cam = kitti_cam();
    let scene = open_road();
    let truth = small_motion();
    let (img_t, depth_t) = render(&scene, &cam, WIDTH, HEIGHT, &RigidMotion::identity());
    let (img_prev, _) = render(&scene, &cam, WIDTH, HEIGHT, &truth);
    let depth: DepthMap = depth_t.map(|d| d * depth_scale);
    let est =
        optimize_pose(&img_t, &img_prev, &depth, &cam, &PoseLossConfig::default(), &RigidMotion::identity()).unwrap();
    (truth, est)
}

#[test]
fn recovers_small_motion_from_identity() {
    let (truth, est) = estimate(1.0);
    let t_err = (est.motion.translation - truth.translation).norm() / truth.translation.norm();
    let r_err = est.motion.angle_to(&truth).to_degrees();
    assert!(t_err < 0.01, "translation error {t_err}");
    assert!(r_err < 0.1, "rotation error {r_err}");
    assert!(est.diagnostics.overlap > 0.5);
}

#[test]
fn translation_scales_with_depth() {
    let (_, unit) = estimate(1.0);
    let (_, doubled) = estimate(2.0);
    let expected = unit.motion.translation * 2.0;
    let err = (doubled.motion.translation - expected).norm() / expected.norm();
    assert!(err < 0.01, "scale error {err}");
    assert!(doubled.motion.angle_to(&unit.motion).to_degrees() < 0.1);
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let cam = kitti_cam();
    let scene = open_road();
    let truth = small_motion();
    let (img_t, depth_t) = render(&scene, &cam, WIDTH, HEIGHT, &RigidMotion::identity());
    let (img_prev, _) = render(&scene, &cam, WIDTH, HEIGHT, &truth);
    let obj = PhotometricObjective::new(&img_t, &img_prev, &depth_t, &cam, 0.85).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = PoseParams::from_motion(&truth);
    for _ in 0..20 {
        let mut p = base;
        for k in 0..3 {
            p.0[k] += rng.random_range(-0.1..0.1);
            p.0[k + 3] += rng.random_range(-0.02..0.02);
        }
        let check = gradient_check(&obj, &p, 1e-5).unwrap();
        assert!(check.relative_error < 1e-3, "{check:?}");
    }
}
