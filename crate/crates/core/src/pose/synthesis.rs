use crate::geometry::{Intrinsics, Pixel, RigidMotion};
use crate::image::{depth_is_valid, snap_to_hull, DepthMap, ImageBuffer, Mask};
use crate::par;

use super::PoseError;

/// Reconstructs frame `t` from `img_prev`: every frame-`t` pixel is
/// backprojected with `depth_t`, moved by `motion` into the previous camera
/// and bilinearly sampled there. Pixels with invalid depth, landing behind
/// the camera or outside the image are 0 with a false mask entry.
pub fn synthesize_view(
    img_prev: &ImageBuffer,
    depth_t: &DepthMap,
    cam: &Intrinsics,
    motion: &RigidMotion,
) -> Result<(ImageBuffer, Mask), PoseError> {
    if !img_prev.same_size(depth_t) {
        return Err(PoseError::ImageSizeMismatch);
    }
    let w = depth_t.width();
    let mut out: alloc::vec::Vec<Option<f32>> = alloc::vec![None; depth_t.len()];
    par::for_each_chunk(&mut out, w.max(1), |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let d = depth_t.get(x, y);
            if !depth_is_valid(d) {
                continue;
            }
            let p = cam.ray(Pixel::new(x as f64, y as f64)) * d as f64;
            let q = motion.rotation * p + motion.translation;
            if !(q.z > 0.0) {
                continue;
            }
            let px = cam.project_unchecked(&q.into());
            let (u, v) = snap_to_hull(px.u, px.v, w, img_prev.height());
            *o = img_prev.bilinear(u, v);
        }
    });
    let img = ImageBuffer::from_vec(w, depth_t.height(), out.iter().map(|v| v.unwrap_or(0.0)).collect())
        .expect("sized from the depth map");
    let mask = Mask::from_vec(w, depth_t.height(), out.iter().map(Option::is_some).collect())
        .expect("sized from the depth map");
    Ok((img, mask))
}
