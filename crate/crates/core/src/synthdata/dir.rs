//! Dataset directory layout:
//!
//! ```text
//! scans/000000.bin   KITTI-style float32 x y z intensity records
//! poses.txt          12 values per line, row-major 3x4
//! times.txt          one timestamp per line
//! labels.txt         "query match" index pairs
//! ```

use std::path::{Path, PathBuf};

use super::SyntheticDataset;
use crate::error::{Error, Result};
use crate::pointcloud::{load_poses_with_times, save_kitti_bin, save_pose_file, save_times, write_text_file, Pose};
use crate::training::{CloudRef, Sample};

fn scan_path(root: &Path, i: usize) -> PathBuf {
    root.join("scans").join(format!("{i:06}.bin"))
}

impl SyntheticDataset {
    /// Writes the recorded poses, scans, timestamps and labels under `root`.
    pub fn write_dir(&self, root: impl AsRef<Path>) -> Result<()> {
        let root = root.as_ref();
        let scans = root.join("scans");
        std::fs::create_dir_all(&scans).map_err(|e| Error::io(&scans, e))?;
        for (i, scan) in self.scans.iter().enumerate() {
            save_kitti_bin(scan_path(root, i), scan)?;
        }
        save_pose_file(root.join("poses.txt"), &self.poses)?;
        save_times(root.join("times.txt"), &self.poses)?;
        let labels: String = self.labels.iter().map(|(q, m)| format!("{q} {m}\n")).collect();
        write_text_file(&root.join("labels.txt"), &labels)
    }
}

/// A dataset directory opened for reading; scans are loaded lazily.
#[derive(Clone, Debug)]
pub struct DatasetDir {
    pub root: PathBuf,
    pub scan_paths: Vec<PathBuf>,
    pub poses: Vec<Pose>,
    pub labels: Vec<(usize, usize)>,
}

impl DatasetDir {
    pub fn len(&self) -> usize {
        self.scan_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scan_paths.is_empty()
    }

    pub fn samples(&self, sequence_id: u32) -> Vec<Sample> {
        self.scan_paths
            .iter()
            .zip(&self.poses)
            .map(|(p, pose)| Sample {
                cloud: CloudRef::File(p.clone()),
                pose: *pose,
                sequence_id,
            })
            .collect()
    }
}

/// Reads `query match` index pairs; a missing file means no labels.
pub fn load_labels(path: &Path, count: usize) -> Result<Vec<(usize, usize)>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut labels = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            reason,
        };
        let v: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| parse_err(e.to_string())))
            .collect::<Result<_>>()?;
        if v.len() != 2 {
            return Err(parse_err(format!("expected 2 indices, found {}", v.len())));
        }
        if v[0] >= count || v[1] >= count {
            return Err(parse_err(format!("index out of range for {count} scans")));
        }
        labels.push((v[0], v[1]));
    }
    Ok(labels)
}

/// Opens a directory in the layout written by [`SyntheticDataset::write_dir`].
/// `times.txt` and `labels.txt` are optional.
pub fn load_dataset_dir(root: impl AsRef<Path>) -> Result<DatasetDir> {
    let root = root.as_ref().to_path_buf();
    let poses = load_poses_with_times(root.join("poses.txt"), root.join("times.txt"))?;
    let scan_paths: Vec<PathBuf> = (0..poses.len()).map(|i| scan_path(&root, i)).collect();
    if let Some(missing) = scan_paths.iter().find(|p| !p.is_file()) {
        return Err(Error::MalformedFile {
            path: missing.clone(),
            reason: format!("missing scan; poses.txt lists {} poses", poses.len()),
        });
    }
    let labels = load_labels(&root.join("labels.txt"), poses.len())?;
    Ok(DatasetDir {
        root,
        scan_paths,
        poses,
        labels,
    })
}
