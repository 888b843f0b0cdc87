use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::Pose;

/// A pose tagged with its frame id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramePose {
    pub frame: u64,
    pub pose: Pose,
}

/// One `frame_id qw qx qy qz tx ty tz` line per pose. Values are written with
/// 17 significant digits so they read back bit-exactly.
pub fn format_poses(poses: &[FramePose]) -> String {
    let mut s = String::from("# frame_id qw qx qy qz tx ty tz\n");
    for fp in poses {
        let [qw, qx, qy, qz] = fp.pose.wxyz();
        let t = fp.pose.translation();
        writeln!(
            s,
            "{} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
            fp.frame, qw, qx, qy, qz, t.x, t.y, t.z
        )
        .unwrap();
    }
    s
}

pub fn parse_poses(text: &str, what: &str) -> Result<Vec<FramePose>> {
    let err = |line: usize, message: String| Error::Parse {
        what: what.to_string(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 {
            return Err(err(n + 1, format!("expected 8 fields, found {}", f.len())));
        }
        let frame = f[0]
            .parse::<u64>()
            .map_err(|e| err(n + 1, format!("bad frame id {:?}: {e}", f[0])))?;
        let mut v = [0.0f64; 7];
        for (slot, s) in v.iter_mut().zip(&f[1..]) {
            *slot = s.parse().map_err(|e| err(n + 1, format!("bad number {s:?}: {e}")))?;
        }
        let pose =
            Pose::from_wxyz([v[0], v[1], v[2], v[3]], [v[4], v[5], v[6]]).map_err(|e| err(n + 1, e.to_string()))?;
        out.push(FramePose { frame, pose });
    }
    Ok(out)
}

pub fn save_poses(path: &Path, poses: &[FramePose]) -> Result<()> {
    write_bytes(path, format_poses(poses).as_bytes())
}

pub fn load_poses(path: &Path) -> Result<Vec<FramePose>> {
    parse_poses(&read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn parses_identity_line() {
        let p = parse_poses("# header\n12 1 0 0 0 3.5 -2 0.8\n", "t").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].frame, 12);
        assert_eq!(p[0].pose.wxyz(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(*p[0].pose.translation(), Vector3::new(3.5, -2.0, 0.8));
    }

    #[test]
    fn malformed_lines_carry_line_numbers() {
        let e = parse_poses("0 1 0 0 0 0 0 0\n\n1 1 0 0 x 0 0 0\n", "poses.txt").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("poses.txt") && msg.contains("line 3"), "{msg}");
        assert!(parse_poses("1 1 0 0 0 0 0\n", "p").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let poses: Vec<FramePose> = (0..50)
            .map(|i| FramePose {
                frame: i,
                pose: Pose::looking_along(Vector3::new(i as f64 * 0.1, 1.0 / 3.0, 1.5), i as f64 * 0.37),
            })
            .collect();
        let back = parse_poses(&format_poses(&poses), "t").unwrap();
        assert_eq!(back, poses);
    }
}
