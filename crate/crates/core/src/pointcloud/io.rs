use std::fs;
use std::io::Write;
use std::path::Path;

use super::{nearest_rotation, orthonormality_error, Point, PointCloud, Pose};
use crate::error::{Error, Result};

/// Timestamp spacing used when no times file accompanies a pose file.
pub const DEFAULT_SCAN_PERIOD: f64 = 0.1;

const ORTHO_DRIFT: f64 = 1e-6;

/// Reads a KITTI-style scan: little-endian `f32 x, y, z, intensity` per point.
pub fn load_kitti_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 16 != 0 {
        return Err(Error::MalformedFile {
            path: path.into(),
            reason: format!("length {} is not a multiple of 16", bytes.len()),
        });
    }
    let points = bytes
        .chunks_exact(16)
        .map(|rec| {
            let f = |k: usize| {
                f32::from_le_bytes([rec[4 * k], rec[4 * k + 1], rec[4 * k + 2], rec[4 * k + 3]])
                    as f64
            };
            Point::new(f(0), f(1), f(2), f(3))
        })
        .collect();
    Ok(PointCloud::new(points))
}

pub fn save_kitti_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(cloud.len() * 16);
    for p in cloud.iter() {
        for v in [p.x, p.y, p.z, p.intensity] {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads one row-major 3x4 transform per line. Timestamps default to
/// `line_index * DEFAULT_SCAN_PERIOD`; see [`load_poses_with_times`].
pub fn load_pose_file(path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.into(),
            line: lineno + 1,
            reason,
        };
        let values = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|e| parse_err(format!("{tok:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let values: [f64; 12] = values
            .try_into()
            .map_err(|v: Vec<f64>| parse_err(format!("expected 12 values, found {}", v.len())))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite value".into()));
        }
        let mut pose = Pose::from_row_major(&values, poses.len() as f64 * DEFAULT_SCAN_PERIOD);
        if orthonormality_error(&pose.rotation) > ORTHO_DRIFT {
            pose.rotation = nearest_rotation(&pose.rotation);
        }
        poses.push(pose);
    }
    Ok(poses)
}

pub fn load_times(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.into(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Loads poses and, when `times` exists, overrides the timestamps with it.
pub fn load_poses_with_times(poses: impl AsRef<Path>, times: impl AsRef<Path>) -> Result<Vec<Pose>> {
    let mut out = load_pose_file(poses)?;
    let times = times.as_ref();
    if times.exists() {
        let t = load_times(times)?;
        if t.len() != out.len() {
            return Err(Error::MalformedFile {
                path: times.into(),
                reason: format!("{} timestamps for {} poses", t.len(), out.len()),
            });
        }
        for (pose, t) in out.iter_mut().zip(t) {
            pose.timestamp = t;
        }
    }
    Ok(out)
}

pub fn save_pose_file(path: impl AsRef<Path>, poses: &[Pose]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for pose in poses {
        let row: Vec<String> = pose.to_row_major().iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    write_text_file(path, &out)
}

pub fn save_times(path: impl AsRef<Path>, poses: &[Pose]) -> Result<()> {
    let mut out = String::new();
    for pose in poses {
        out.push_str(&format!("{:e}\n", pose.timestamp));
    }
    write_text_file(path.as_ref(), &out)
}

pub fn write_text_file(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
