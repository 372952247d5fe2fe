mod common;

use approx::assert_relative_eq;
use common::*;
use dfm_core::closed_form::{
    binocular_depth, effective_baseline, general_two_view_depth, parallel_two_view_depth, ClosedFormConfig,
    Correspondence,
};
use dfm_core::geometry::{Intrinsics, Point3, RigidMotion, Vector3};
use dfm_core::synth::{relative_motion, sample_correspondences};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn reduction_chain_over_random_inputs() {
    let cfg = ClosedFormConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
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
        assert!(rel(from_u.depth, parallel) < 1e-9, "general {} parallel {parallel}", from_u.depth);

        // same point without forward motion
        let lateral = RigidMotion::from_translation(Vector3::new(-dx, 0.0, 0.0));
        let (b, _) = cam.project(&lateral.transform_point(&p)).unwrap();
        let parallel = parallel_two_view_depth(&cam, a.u, b.u, dx, 0.0, &cfg).unwrap();
        let binocular = binocular_depth(f, dx, a.u - b.u, &cfg).unwrap();
        assert!(rel(parallel, binocular) < 1e-9);
        assert!(rel(binocular, p.z) < 1e-9);
        checked += 1;
    }
}

#[test]
fn oracle_depths_over_random_poses() {
    let cam = kitti_cam();
    let scene = street();
    let cfg = ClosedFormConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    let mut seed = 0u64;
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
        let samples =
            sample_correspondences(&scene, &cam, WIDTH, HEIGHT, &RigidMotion::identity(), &pose_b, 20, seed).unwrap();
        for s in samples {
            let sol = general_two_view_depth(&cam, &motion, &s.corr, &cfg).unwrap();
            assert!(rel(sol.depth1(), s.depth_a) < 1e-6, "{} vs {}", sol.depth1(), s.depth_a);
            assert!(rel(sol.depth2(), s.depth_b) < 1e-6);
            checked += 1;
        }
    }
}

#[test]
fn baseline_arithmetic() {
    let cam = Intrinsics::with_focal(700.0, 600.0, 180.0).unwrap();
    assert_eq!(effective_baseline(0.0, 5.4, cam.cu + 70.0, &cam).abs(), 0.54);
    assert_eq!(effective_baseline(0.0, 2.7, cam.cu + 140.0, &cam).abs(), 0.54);
    assert_relative_eq!(binocular_depth(700.0, 0.54, 18.9, &ClosedFormConfig::default()).unwrap(), 20.0);
}
