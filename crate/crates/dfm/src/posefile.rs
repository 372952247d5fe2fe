//! Pose text files: one `tx ty tz qw qx qy qz` per line, `#` starts a
//! comment. Quaternions are normalized on read.

use std::fmt::Write as _;

use dfm_core::geometry::RigidMotion;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseFileError {
    #[error("line {line}: expected 7 values, found {found}")]
    WrongValueCount { line: usize, found: usize },
    #[error("line {line}: {token:?} is not a finite number")]
    BadNumber { line: usize, token: String },
    #[error("line {line}: quaternion has zero norm")]
    ZeroQuaternion { line: usize },
    #[error("no pose in file")]
    Empty,
}

pub fn parse_poses(text: &str) -> Result<Vec<RigidMotion>, PoseFileError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() != 7 {
            return Err(PoseFileError::WrongValueCount { line, found: tokens.len() });
        }
        let mut v = [0.0f64; 7];
        for (slot, tok) in v.iter_mut().zip(&tokens) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| PoseFileError::BadNumber { line, token: tok.to_string() })?;
        }
        let motion = RigidMotion::from_parts([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]])
            .map_err(|_| PoseFileError::ZeroQuaternion { line })?;
        out.push(motion);
    }
    Ok(out)
}

/// The first pose of a file.
pub fn parse_pose(text: &str) -> Result<RigidMotion, PoseFileError> {
    parse_poses(text)?.into_iter().next().ok_or(PoseFileError::Empty)
}

/// Full-precision text; `parse_poses` reads it back exactly.
pub fn format_poses(poses: &[RigidMotion], header: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(h) = header {
        for l in h.lines() {
            let _ = writeln!(s, "# {l}");
        }
    }
    for p in poses {
        let t = p.translation;
        let [w, x, y, z] = p.quaternion_wxyz();
        let _ = writeln!(s, "{:e} {:e} {:e} {:e} {:e} {:e} {:e}", t.x, t.y, t.z, w, x, y, z);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use dfm_core::geometry::Vector3;

    #[test]
    fn comments_and_normalization() {
        let p = parse_pose("# motion\n\n1 2 3  2 0 0 0 # trailing\n").unwrap();
        assert_eq!(p.translation, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(p.quaternion_wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn errors() {
        assert_eq!(parse_pose("1 2 3 1 0 0"), Err(PoseFileError::WrongValueCount { line: 1, found: 6 }));
        assert!(matches!(parse_pose("1 2 x 1 0 0 0"), Err(PoseFileError::BadNumber { line: 1, .. })));
        assert!(matches!(parse_pose("1 2 NaN 1 0 0 0"), Err(PoseFileError::BadNumber { .. })));
        assert_eq!(parse_pose("#\n1 2 3 0 0 0 0"), Err(PoseFileError::ZeroQuaternion { line: 2 }));
        assert_eq!(parse_pose("# nothing"), Err(PoseFileError::Empty));
    }

    #[test]
    fn round_trip_is_exact() {
        let p = RigidMotion::from_euler_zyx(0.1, -0.2, 0.3, Vector3::new(0.1, 1e-7, -3.5));
        let back = parse_poses(&format_poses(&[p, p.inverse()], Some("two poses"))).unwrap();
        assert_eq!(back[0].translation, p.translation);
        assert_eq!(back[0].quaternion_wxyz(), p.quaternion_wxyz());
        assert_eq!(back.len(), 2);
    }
}
