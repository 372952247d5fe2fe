//! Shared synthetic scenes.
#![allow(dead_code)]

use dfm_core::geometry::{Intrinsics, RigidMotion, Vector3};
use dfm_core::synth::{Primitive, Scene, Texture};

pub const WIDTH: usize = 1248;
pub const HEIGHT: usize = 320;

pub fn kitti_cam() -> Intrinsics {
    Intrinsics::new(707.0, 707.0, 601.0, 160.0).unwrap()
}

pub fn noise(cell: f64, seed: u64) -> Texture {
    Texture::Noise { cell, seed, octaves: 3, low: 0.05, high: 0.95 }
}

/// Road, a far wall and three boxes; every pixel has depth.
pub fn street() -> Scene {
    Scene {
        primitives: vec![
            Primitive::Plane {
                point: [0.0, 1.65, 10.0],
                normal: [0.0, -1.0, 0.0],
                half_extent: None,
                texture: noise(0.4, 11),
            },
            Primitive::FrontoPlane { depth: 45.0, bounds: None, texture: noise(1.5, 12) },
            Primitive::Box { min: [-4.0, -0.5, 12.0], max: [-2.0, 1.65, 16.0], texture: noise(0.3, 13) },
            Primitive::Box { min: [2.5, -1.0, 18.0], max: [5.0, 1.65, 22.0], texture: noise(0.3, 14) },
            Primitive::Box { min: [-1.0, 0.2, 26.0], max: [1.5, 1.65, 30.0], texture: noise(0.3, 15) },
        ],
        background: 0.5,
        supersample: false,
    }
}

/// Band-limited road ending at a far wall; no occluding edges.
pub fn open_road() -> Scene {
    let smooth = |cell, seed| Texture::Noise { cell, seed, octaves: 2, low: 0.05, high: 0.95 };
    Scene {
        primitives: vec![
            Primitive::Plane {
                point: [0.0, 1.65, 15.0],
                normal: [0.0, -1.0, 0.0],
                half_extent: Some([40.0, 15.0]),
                texture: smooth(1.5, 11),
            },
            Primitive::FrontoPlane { depth: 45.0, bounds: None, texture: smooth(3.0, 12) },
        ],
        background: 0.5,
        supersample: false,
    }
}

/// Motion with `‖t‖ = 0.3` m and a 2° rotation.
pub fn small_motion() -> RigidMotion {
    let t = Vector3::new(0.04, -0.01, 0.28);
    let t = t * (0.3 / t.norm());
    let axis = Vector3::new(0.15, 1.0, 0.05).normalize();
    RigidMotion::from_rotation_vector(axis * 2f64.to_radians(), t)
}
