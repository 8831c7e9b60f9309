//! Capture manifest: a JSON index pointing at a ping CSV, a scene cloud PLY
//! and one glass-mask PNG per frame. Relative paths resolve against the
//! manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::acoustic::AcousticPing;
use super::mask::GlassMask;
use super::trajectory::{StampedPose, Trajectory};
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, PointCloud, PoseSE3};

pub const PING_CSV_HEADER: [&str; 3] = ["timestamp_s", "sensor_id", "range_m"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub t: f64,
    /// Camera-to-world, 16 row-major values.
    pub pose: PoseSE3,
    pub intrinsics: CameraIntrinsics,
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub frames: Vec<FrameEntry>,
    pub pings: String,
    pub scene_cloud: String,
    pub trajectory: Vec<StampedPose>,
    /// Sensor id → sensor-to-camera pose (16 row-major values). Sensors
    /// look along their local +z axis.
    pub extrinsics: BTreeMap<String, PoseSE3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub timestamp: f64,
    pub pose: PoseSE3,
    pub mask_path: PathBuf,
    pub intrinsics: CameraIntrinsics,
}

/// Everything a manifest references, loaded and validated.
#[derive(Debug, Clone)]
pub struct Capture {
    pub frames: Vec<FrameRecord>,
    pub masks: Vec<GlassMask>,
    pub pings: Vec<AcousticPing>,
    pub scene_cloud: PointCloud,
    pub trajectory: Trajectory,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Capture> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ManifestFile =
        serde_json::from_str(&text).map_err(|e| Error::parse(&ctx, e.to_string()))?;
    let root = path.parent().unwrap_or_else(|| Path::new("."));

    let mut extrinsics = BTreeMap::new();
    for (key, pose) in &file.extrinsics {
        let id: u16 = key
            .parse()
            .map_err(|_| Error::parse(format!("{ctx} extrinsics[{key:?}]"), "sensor id must be a small integer"))?;
        extrinsics.insert(id, *pose);
    }

    let mut frames = Vec::with_capacity(file.frames.len());
    let mut masks = Vec::with_capacity(file.frames.len());
    for (i, f) in file.frames.iter().enumerate() {
        let fctx = format!("{ctx} frames[{i}]");
        if let Some(prev) = frames.last().map(|r: &FrameRecord| r.timestamp) {
            if !(f.t > prev) {
                return Err(Error::parse(
                    fctx,
                    format!("timestamp {} does not increase after {prev}", f.t),
                ));
            }
        }
        f.intrinsics
            .validate()
            .map_err(|e| Error::parse(&fctx, e.to_string()))?;
        let mask_path = root.join(&f.mask);
        if !mask_path.is_file() {
            return Err(Error::parse(fctx, format!("mask file {} not found", mask_path.display())));
        }
        let mask = GlassMask::read_png(&mask_path)?;
        if (mask.width, mask.height) != (f.intrinsics.width, f.intrinsics.height) {
            return Err(Error::parse(
                fctx,
                format!(
                    "mask {} is {}x{} but intrinsics say {}x{}",
                    mask_path.display(),
                    mask.width,
                    mask.height,
                    f.intrinsics.width,
                    f.intrinsics.height
                ),
            ));
        }
        frames.push(FrameRecord {
            timestamp: f.t,
            pose: f.pose,
            mask_path,
            intrinsics: f.intrinsics,
        });
        masks.push(mask);
    }

    let trajectory = Trajectory::new(file.trajectory.clone())
        .map_err(|e| Error::parse(format!("{ctx} trajectory"), e.to_string()))?;

    let pings = read_pings_csv(&root.join(&file.pings), &extrinsics)?;

    let cloud_path = root.join(&file.scene_cloud);
    if !cloud_path.is_file() {
        return Err(Error::parse(
            format!("{ctx} scene_cloud"),
            format!("file {} not found", cloud_path.display()),
        ));
    }
    let scene_cloud = PointCloud::read_ply(&cloud_path)?;

    Ok(Capture {
        frames,
        masks,
        pings,
        scene_cloud,
        trajectory,
    })
}

/// Parses the ping log. Rows must be in non-decreasing time order and name
/// a sensor present in `extrinsics`.
pub fn read_pings_csv(path: &Path, extrinsics: &BTreeMap<u16, PoseSE3>) -> Result<Vec<AcousticPing>> {
    let ctx = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(&ctx, format!("{other:?}")),
        })?;
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(&ctx, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != PING_CSV_HEADER {
        return Err(Error::parse(
            &ctx,
            format!("header must be {}", PING_CSV_HEADER.join(",")),
        ));
    }
    let mut pings: Vec<AcousticPing> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rctx = format!("{ctx}:{line}");
        let rec = rec.map_err(|e| Error::parse(&rctx, e.to_string()))?;
        if rec.len() != 3 {
            return Err(Error::parse(rctx, format!("expected 3 fields, found {}", rec.len())));
        }
        let timestamp: f64 = rec[0]
            .parse()
            .map_err(|_| Error::parse(&rctx, format!("bad timestamp '{}'", &rec[0])))?;
        let sensor_id: u16 = rec[1]
            .parse()
            .map_err(|_| Error::parse(&rctx, format!("bad sensor id '{}'", &rec[1])))?;
        let range: f64 = rec[2]
            .parse()
            .map_err(|_| Error::parse(&rctx, format!("bad range '{}'", &rec[2])))?;
        if !timestamp.is_finite() || !range.is_finite() {
            return Err(Error::parse(rctx, "non-finite value"));
        }
        if let Some(prev) = pings.last() {
            if timestamp < prev.timestamp {
                return Err(Error::parse(
                    rctx,
                    format!("timestamp {timestamp} goes backwards from {}", prev.timestamp),
                ));
            }
        }
        let extrinsic = *extrinsics
            .get(&sensor_id)
            .ok_or_else(|| Error::parse(&rctx, format!("no extrinsic for sensor {sensor_id}")))?;
        pings.push(AcousticPing {
            timestamp,
            sensor_id,
            range,
            extrinsic,
        });
    }
    Ok(pings)
}

pub fn write_pings_csv(path: &Path, pings: &[(f64, u16, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let wrap = |e: csv::Error| Error::parse(path.display().to_string(), e.to_string());
    w.write_record(PING_CSV_HEADER).map_err(wrap)?;
    for (t, id, r) in pings {
        w.write_record([t.to_string(), id.to_string(), r.to_string()])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_manifest(path: &Path, manifest: &ManifestFile) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{ply, Vec3};

    fn write_minimal(dir: &Path, pings_csv: &str, with_mask: bool) -> PathBuf {
        let intr = CameraIntrinsics::new(2.0, 2.0, 1.0, 1.0, 4, 3).unwrap();
        if with_mask {
            GlassMask::empty(4, 3).write_png(dir.join("m0.png")).unwrap();
        }
        std::fs::write(dir.join("pings.csv"), pings_csv).unwrap();
        PointCloud::new(vec![Vec3::zeros(), Vec3::x()])
            .write_ply(dir.join("scene.ply"), ply::Format::BinaryLittleEndian)
            .unwrap();
        let m = ManifestFile {
            frames: vec![FrameEntry { t: 0.0, pose: PoseSE3::identity(), intrinsics: intr, mask: "m0.png".into() }],
            pings: "pings.csv".into(),
            scene_cloud: "scene.ply".into(),
            trajectory: vec![
                StampedPose { t: 0.0, pose: PoseSE3::identity() },
                StampedPose { t: 1.0, pose: PoseSE3::identity() },
            ],
            extrinsics: [("0".to_string(), PoseSE3::identity())].into_iter().collect(),
        };
        let p = dir.join("manifest.json");
        write_manifest(&p, &m).unwrap();
        p
    }

    #[test]
    fn empty_ping_log_one_frame() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_minimal(dir.path(), "timestamp_s,sensor_id,range_m\n", true);
        let cap = load_manifest(&p).unwrap();
        assert_eq!(cap.frames.len(), 1);
        assert!(cap.pings.is_empty());
        assert_eq!(cap.scene_cloud.len(), 2);
    }

    #[test]
    fn missing_mask_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_minimal(dir.path(), "timestamp_s,sensor_id,range_m\n", false);
        let err = load_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("m0.png"), "{err}");
        assert!(err.contains("frames[0]"), "{err}");
    }

    #[test]
    fn malformed_and_unordered_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_minimal(dir.path(), "timestamp_s,sensor_id,range_m\n0.1,0,1.0\n0.2,0,abc\n", true);
        let err = load_manifest(&p).unwrap_err().to_string();
        assert!(err.contains(":3") && err.contains("abc"), "{err}");

        let p = write_minimal(dir.path(), "timestamp_s,sensor_id,range_m\n0.5,0,1.0\n0.2,0,1.0\n", true);
        assert!(load_manifest(&p).unwrap_err().to_string().contains("backwards"));

        let p = write_minimal(dir.path(), "timestamp_s,sensor_id,range_m\n0.5,7,1.0\n", true);
        assert!(load_manifest(&p).unwrap_err().to_string().contains("sensor 7"));

        let p = write_minimal(dir.path(), "time,id,range\n", true);
        assert!(load_manifest(&p).is_err());
    }

    #[test]
    fn ping_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        write_pings_csv(&p, &[(0.1, 0, 1.5), (0.1, 2, 0.75)]).unwrap();
        let ext: BTreeMap<u16, PoseSE3> = [(0, PoseSE3::identity()), (2, PoseSE3::identity())].into_iter().collect();
        let pings = read_pings_csv(&p, &ext).unwrap();
        assert_eq!(pings.len(), 2);
        assert_eq!((pings[1].sensor_id, pings[1].range), (2, 0.75));
    }
}
