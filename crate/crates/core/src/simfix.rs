//! Minimal capture simulator for analytic rectangle scenes.
//!
//! Acoustic sensors return the first surface along their forward axis,
//! glass included. The depth sensor sees through glass, so the scene cloud
//! only samples opaque rectangles outside every glass hole. Masks mark the
//! pixels whose ray meets glass before anything opaque.

use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{pixel_to_ray, ply, Aabb, CameraIntrinsics, PointCloud, PoseSE3, Ray, Rect, TriMesh, Vec3};
use crate::ingest::{
    write_manifest, write_pings_csv, FrameEntry, GlassMask, ManifestFile, RangeGate, StampedPose, Trajectory,
};
use crate::rng;
use crate::synthgen::{GlassSpec, ScenePair};

const HOLE_TOL: f64 = 1e-9;
const BOUNDS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Opaque(usize),
    Glass(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub surface: Surface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticScene {
    /// Opaque rectangles. Glass may sit inside them; the glass area is a hole.
    pub walls: Vec<Rect>,
    pub glass: Vec<GlassSpec>,
    pub bounds: Aabb,
}

impl AnalyticScene {
    pub fn new(walls: Vec<Rect>, glass: Vec<GlassSpec>, bounds: Aabb) -> Result<Self> {
        let s = Self { walls, glass, bounds };
        s.validate()?;
        Ok(s)
    }

    /// Opaque room rectangles and glass of a generated pair, crop-local.
    pub fn from_pair(pair: &ScenePair) -> Result<Self> {
        Self::new(pair.opaque_rects(), pair.glass.clone(), pair.bounds)
    }

    pub fn validate(&self) -> Result<()> {
        let padded = self.bounds.inflated(BOUNDS_TOL);
        let glass: Vec<Rect> = self.glass.iter().map(GlassSpec::rect).collect();
        for r in self.walls.iter().chain(&glass) {
            if !r.corners().iter().all(|c| padded.contains(c)) {
                return Err(Error::InvalidInput(format!(
                    "rectangle centred at {:?} leaves the scene bounds",
                    r.center.as_slice()
                )));
            }
        }
        for g in &self.glass {
            g.validate()?;
        }
        Ok(())
    }

    fn in_hole(&self, p: &Vec3) -> bool {
        self.glass.iter().any(|g| g.captures(p, HOLE_TOL))
    }

    /// First opaque hit, ignoring glass entirely.
    pub fn cast_opaque(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, w) in self.walls.iter().enumerate() {
            if let Some(t) = w.intersect(ray) {
                if best.is_none_or(|b| t < b.t) && !self.in_hole(&ray.at(t)) {
                    best = Some(Hit {
                        t,
                        surface: Surface::Opaque(i),
                    });
                }
            }
        }
        best
    }

    /// First hit on any surface. Ties go to glass.
    pub fn cast(&self, ray: &Ray) -> Option<Hit> {
        let mut best = self.cast_opaque(ray);
        for (i, g) in self.glass.iter().enumerate() {
            if let Some(t) = g.rect().intersect(ray) {
                if best.is_none_or(|b| t <= b.t) {
                    best = Some(Hit {
                        t,
                        surface: Surface::Glass(i),
                    });
                }
            }
        }
        best
    }

    /// Area-weighted uniform samples over the opaque rectangles, holes
    /// excluded.
    pub fn scene_cloud(&self, n: usize, seed: u64) -> Result<PointCloud> {
        let areas: Vec<f64> = self.walls.iter().map(Rect::area).collect();
        let total: f64 = areas.iter().sum();
        if n == 0 {
            return Ok(PointCloud::default());
        }
        if !(total > 0.0) {
            return Err(Error::SamplingFailed("scene has no opaque area".into()));
        }
        let mut cdf = Vec::with_capacity(areas.len());
        let mut acc = 0.0;
        for a in &areas {
            acc += a / total;
            cdf.push(acc);
        }
        let mut rng = rng::substream(seed, "simfix.scene_cloud", 0);
        let mut points = Vec::with_capacity(n);
        let budget = 100 * n;
        for _ in 0..budget {
            if points.len() == n {
                break;
            }
            let x: f64 = rng.random();
            let i = cdf.partition_point(|&c| c < x).min(self.walls.len() - 1);
            let w = &self.walls[i];
            let (a, b): (f64, f64) = (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
            let p = w.center + w.half_u * a + w.half_v * b;
            if !self.in_hole(&p) {
                points.push(p);
            }
        }
        if points.len() < n {
            return Err(Error::SamplingFailed(format!(
                "only {} of {n} opaque samples landed outside glass",
                points.len()
            )));
        }
        Ok(PointCloud::new(points))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub intrinsics: CameraIntrinsics,
    pub frame_rate: f64,
    pub ping_rate: f64,
    /// Sensor yaw about the camera y axis, degrees. Sensor ids follow
    /// list order.
    pub sensor_yaws_deg: Vec<f64>,
    pub gate: RangeGate,
    pub scene_points: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics {
                fx: 32.0,
                fy: 32.0,
                cx: 32.0,
                cy: 24.0,
                width: 64,
                height: 48,
            },
            frame_rate: 30.0,
            ping_rate: 10.0,
            sensor_yaws_deg: vec![0.0, 90.0, -90.0],
            gate: RangeGate::default(),
            scene_points: 10_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if !(self.frame_rate > 0.0 && self.ping_rate > 0.0) {
            return Err(Error::InvalidInput("frame and ping rates must be positive".into()));
        }
        if self.sensor_yaws_deg.is_empty() || self.sensor_yaws_deg.len() > usize::from(u16::MAX) {
            return Err(Error::InvalidInput("need at least one acoustic sensor".into()));
        }
        if !(self.gate.min >= 0.0 && self.gate.max > self.gate.min) {
            return Err(Error::InvalidInput(format!(
                "range gate ({}, {}] is empty",
                self.gate.min, self.gate.max
            )));
        }
        Ok(())
    }

    /// Sensor-to-camera poses: sensors sit at the camera centre, turned by
    /// their yaw about camera y.
    pub fn extrinsics(&self) -> Vec<PoseSE3> {
        self.sensor_yaws_deg
            .iter()
            .map(|y| PoseSE3::from_axis_angle(Vec3::y(), y.to_radians(), Vec3::zeros()))
            .collect()
    }
}

/// Camera-to-world pose at `eye` looking along horizontal `forward`, image
/// y pointing down.
pub fn look_pose(eye: Vec3, forward: Vec3) -> Result<PoseSE3> {
    let z = Vec3::new(forward.x, forward.y, 0.0);
    if z.norm() < 1e-12 {
        return Err(Error::InvalidInput("view direction must have a horizontal component".into()));
    }
    let z = z.normalize();
    let y = -Vec3::z();
    let x = y.cross(&z);
    PoseSE3::new(nalgebra::Matrix3::from_columns(&[x, y, z]), eye)
}

/// Straight lateral pass in front of `glass` at `distance`, eye height at
/// the pane centre, facing the pane; `distance` shrinks to fit `bounds`.
/// Runs `overshoot` past each edge (clamped to `bounds`) at `speed` m/s with poses every `1/rate` s.
pub fn sweep_past(
    glass: &GlassSpec,
    distance: f64,
    overshoot: f64,
    speed: f64,
    rate: f64,
    bounds: &Aabb,
) -> Result<Vec<StampedPose>> {
    if !(distance > 0.0 && speed > 0.0 && rate > 0.0 && overshoot >= 0.0) {
        return Err(Error::InvalidInput("sweep distance, speed and rate must be positive".into()));
    }
    let n = glass.wall_normal;
    let tan = glass.tangent();
    let inner = bounds.inflated(-1e-3);
    // Small rooms: stand as far back as the opposite wall allows.
    let room = (0..3)
        .filter(|&i| n[i].abs() > 1e-12)
        .map(|i| {
            let edge = if n[i] > 0.0 { inner.max[i] - 1e-3 } else { inner.min[i] + 1e-3 };
            (edge - glass.center[i]) / n[i]
        })
        .fold(f64::INFINITY, f64::min);
    if room < distance {
        log::debug!("sweep distance {distance} clamped to {room:.3} by the room");
    }
    let mid = glass.center + n * distance.min(room);
    let half = 0.5 * glass.width + overshoot;
    // Largest step along `dir·tan` that keeps the eye inside.
    let reach = |dir: f64| {
        (0..3)
            .filter(|&i| tan[i].abs() > 1e-12)
            .map(|i| {
                let d = dir * tan[i];
                if d > 0.0 { (inner.max[i] - mid[i]) / d } else { (inner.min[i] - mid[i]) / d }
            })
            .fold(half, f64::min)
            .max(0.0)
    };
    let (s0, s1) = (-reach(-1.0), reach(1.0));
    if !inner.contains(&mid) || s1 - s0 <= 0.0 {
        return Err(Error::InvalidInput("sweep path is outside the scene bounds".into()));
    }
    let duration = (s1 - s0) / speed;
    let steps = (duration * rate).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|k| {
            let t = (k as f64 / steps as f64) * duration;
            let eye = mid + tan * (s0 + speed * t).min(s1);
            Ok(StampedPose {
                t,
                pose: look_pose(eye, -n)?,
            })
        })
        .collect()
}

/// How a simulated operator walks past each pane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub distance: f64,
    pub overshoot: f64,
    pub speed: f64,
    /// Trajectory sample rate, Hz.
    pub rate: f64,
    /// Time spent moving between panes, seconds.
    pub transit: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            distance: 1.2,
            overshoot: 0.3,
            speed: 0.3,
            rate: 30.0,
            transit: 1.0,
        }
    }
}

/// One lateral pass per pane, in order, joined by `transit`-second moves.
pub fn sweep_all(glass: &[GlassSpec], bounds: &Aabb, cfg: &SweepConfig) -> Result<Vec<StampedPose>> {
    let mut out: Vec<StampedPose> = Vec::new();
    for g in glass {
        let seg = sweep_past(g, cfg.distance, cfg.overshoot, cfg.speed, cfg.rate, bounds)?;
        let offset = out.last().map_or(0.0, |l| l.t + cfg.transit);
        out.extend(seg.into_iter().map(|s| StampedPose {
            t: s.t + offset,
            pose: s.pose,
        }));
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("no glass to sweep past".into()));
    }
    Ok(out)
}

/// Captures a generated pair by sweeping past each of its panes.
pub fn capture_pair(
    pair: &ScenePair,
    sim: &SimConfig,
    sweep: &SweepConfig,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<SimCapture> {
    let scene = AnalyticScene::from_pair(pair)?;
    let traj = sweep_all(&scene.glass, &scene.bounds, sweep)?;
    simulate_capture(&scene, &traj, sim, seed, out_dir)
}

/// Triangle mesh of every glass rectangle, the transparent ground truth.
pub fn glass_mesh(glass: &[GlassSpec]) -> TriMesh {
    let mut m = TriMesh::default();
    for g in glass {
        m.append(&g.rect().to_mesh());
    }
    m
}

/// Counts of what a capture produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimCapture {
    pub manifest: PathBuf,
    pub frames: usize,
    pub pings: usize,
}

/// Times `start, start + 1/rate, ...` up to and including `end`.
fn ticks(start: f64, end: f64, rate: f64) -> Vec<f64> {
    let n = ((end - start) * rate + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 / rate).filter(|&t| t <= end).collect()
}

/// Glass mask for one frame: pixel `(u, v)` is set when the ray through the
/// pixel corner meets glass before any opaque surface.
pub fn render_mask(scene: &AnalyticScene, intr: &CameraIntrinsics, pose: &PoseSE3) -> Result<GlassMask> {
    let mut mask = GlassMask::empty(intr.width, intr.height);
    for v in 0..intr.height {
        for u in 0..intr.width {
            let ray = pixel_to_ray(intr, pose, f64::from(u), f64::from(v))?;
            if matches!(scene.cast(&ray), Some(Hit { surface: Surface::Glass(_), .. })) {
                mask.set(u, v, true);
            }
        }
    }
    Ok(mask)
}

/// Simulated pings `(t, sensor id, range)` over the trajectory span.
pub fn simulate_pings(scene: &AnalyticScene, trajectory: &Trajectory, cfg: &SimConfig) -> Result<Vec<(f64, u16, f64)>> {
    let extr = cfg.extrinsics();
    let mut out = Vec::new();
    for t in ticks(trajectory.start(), trajectory.end(), cfg.ping_rate) {
        let pose = trajectory.pose_at(t, 0.0)?;
        for (id, e) in extr.iter().enumerate() {
            let s = pose.compose(e);
            let ray = Ray::new(s.translation, s.transform_vector(&Vec3::z()))?;
            if let Some(hit) = scene.cast(&ray) {
                if cfg.gate.accepts(hit.t) {
                    out.push((t, id as u16, hit.t));
                }
            }
        }
    }
    Ok(out)
}

/// Renders a full capture into `out_dir` and writes `manifest.json` there.
pub fn simulate_capture(
    scene: &AnalyticScene,
    trajectory: &[StampedPose],
    cfg: &SimConfig,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<SimCapture> {
    cfg.validate()?;
    scene.validate()?;
    let out_dir = out_dir.as_ref();
    let traj = Trajectory::new(trajectory.to_vec())?;
    let inside = scene.bounds.inflated(BOUNDS_TOL);
    if let Some(s) = trajectory.iter().find(|s| !inside.contains(&s.pose.translation)) {
        return Err(Error::InvalidInput(format!(
            "trajectory leaves the scene bounds at t = {}",
            s.t
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let times = ticks(traj.start(), traj.end(), cfg.frame_rate);
    let frames: Vec<FrameEntry> = times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let pose = traj.pose_at(t, 0.0)?;
            let mask = render_mask(scene, &cfg.intrinsics, &pose)?;
            let name = format!("mask_{i:05}.png");
            mask.write_png(out_dir.join(&name))?;
            Ok(FrameEntry {
                t,
                pose,
                intrinsics: cfg.intrinsics,
                mask: name,
            })
        })
        .collect::<Result<_>>()?;

    let pings = simulate_pings(scene, &traj, cfg)?;
    write_pings_csv(&out_dir.join("pings.csv"), &pings)?;

    scene
        .scene_cloud(cfg.scene_points, seed)?
        .write_ply(out_dir.join("scene.ply"), ply::Format::BinaryLittleEndian)?;

    let manifest = ManifestFile {
        frames,
        pings: "pings.csv".into(),
        scene_cloud: "scene.ply".into(),
        trajectory: trajectory.to_vec(),
        extrinsics: cfg
            .extrinsics()
            .into_iter()
            .enumerate()
            .map(|(i, e)| (i.to_string(), e))
            .collect(),
    };
    let path = out_dir.join("manifest.json");
    write_manifest(&path, &manifest)?;
    Ok(SimCapture {
        manifest: path,
        frames: manifest.frames.len(),
        pings: pings.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_apc, load_manifest, DEFAULT_TIME_MARGIN};
    use crate::synthgen::GlassKind;

    /// 4 m × 4 m × 3 m room with a 2 m × 1.5 m pane on the y = 0 wall.
    pub(crate) fn pane_room() -> AnalyticScene {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(4.0, 4.0, 3.0)).unwrap();
        let wall = |c: [f64; 3], u: [f64; 3], v: [f64; 3]| Rect {
            center: c.into(),
            half_u: u.into(),
            half_v: v.into(),
        };
        let walls = vec![
            wall([2.0, 0.0, 1.5], [2.0, 0.0, 0.0], [0.0, 0.0, 1.5]),
            wall([2.0, 4.0, 1.5], [2.0, 0.0, 0.0], [0.0, 0.0, 1.5]),
            wall([0.0, 2.0, 1.5], [0.0, 2.0, 0.0], [0.0, 0.0, 1.5]),
            wall([4.0, 2.0, 1.5], [0.0, 2.0, 0.0], [0.0, 0.0, 1.5]),
            wall([2.0, 2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]),
        ];
        let glass = vec![GlassSpec {
            kind: GlassKind::Window,
            center: Vec3::new(2.0, 0.0, 1.5),
            width: 2.0,
            height: 1.5,
            wall_normal: Vec3::y(),
        }];
        AnalyticScene::new(walls, glass, bounds).unwrap()
    }

    #[test]
    fn ping_on_glass_at_distance_two() {
        let scene = pane_room();
        let ray = Ray::new(Vec3::new(2.0, 2.0, 1.5), -Vec3::y()).unwrap();
        let hit = scene.cast(&ray).unwrap();
        assert_eq!(hit.surface, Surface::Glass(0));
        assert!((hit.t - 2.0).abs() < 1e-12);
        // Depth sees through the pane.
        assert_eq!(scene.cast_opaque(&ray), None);
    }

    #[test]
    fn open_space_gives_no_ping() {
        let scene = pane_room();
        // Camera +z pointing at the sky; the room has no ceiling.
        let up = PoseSE3::from_translation(Vec3::new(2.0, 2.0, 1.5));
        let cfg = SimConfig {
            sensor_yaws_deg: vec![0.0],
            ..SimConfig::default()
        };
        let traj = Trajectory::new(vec![StampedPose { t: 0.0, pose: up }]).unwrap();
        assert!(simulate_pings(&scene, &traj, &cfg).unwrap().is_empty());
    }

    #[test]
    fn scene_cloud_avoids_glass() {
        let scene = pane_room();
        let cloud = scene.scene_cloud(5000, 3).unwrap();
        assert_eq!(cloud.len(), 5000);
        assert!(cloud.points.iter().all(|p| !scene.glass[0].captures(p, 1e-6)));
        assert_eq!(cloud, scene.scene_cloud(5000, 3).unwrap());
    }

    #[test]
    fn masks_match_brute_force() {
        let scene = pane_room();
        let cfg = SimConfig {
            intrinsics: CameraIntrinsics::new(8.0, 8.0, 8.0, 6.0, 16, 12).unwrap(),
            ..SimConfig::default()
        };
        let pose = look_pose(Vec3::new(1.5, 1.2, 1.4), Vec3::new(0.3, -1.0, 0.0)).unwrap();
        let mask = render_mask(&scene, &cfg.intrinsics, &pose).unwrap();
        let g = scene.glass[0].rect();
        let mut any = false;
        for v in 0..12 {
            for u in 0..16 {
                let ray = pixel_to_ray(&cfg.intrinsics, &pose, f64::from(u), f64::from(v)).unwrap();
                let tg = g.intersect(&ray);
                let to = scene
                    .walls
                    .iter()
                    .filter_map(|w| w.intersect(&ray).filter(|&t| !scene.glass[0].captures(&ray.at(t), 1e-9)))
                    .fold(f64::INFINITY, f64::min);
                let expect = tg.is_some_and(|t| t <= to);
                any |= expect;
                assert_eq!(mask.get(u, v), expect, "pixel ({u}, {v})");
            }
        }
        assert!(any);
    }

    #[test]
    fn sweep_lands_pings_on_pane() {
        let scene = pane_room();
        let g = scene.glass[0];
        let traj = sweep_past(&g, 1.5, 0.0, 0.1, 30.0, &scene.bounds).unwrap();
        assert!((traj.last().unwrap().t - 20.0).abs() < 1e-9);
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimConfig {
            frame_rate: 1.0,
            scene_points: 500,
            ..SimConfig::default()
        };
        let cap = simulate_capture(&scene, &traj, &cfg, 1, dir.path()).unwrap();
        let capture = load_manifest(&cap.manifest).unwrap();
        let apc = build_apc(&capture.pings, &capture.trajectory, &cfg.gate, DEFAULT_TIME_MARGIN).unwrap();
        let on_pane = apc
            .points
            .points
            .iter()
            .filter(|p| p.y.abs() < 1e-6 && g.captures(p, 1e-6))
            .count();
        assert!(on_pane >= 90, "{on_pane} pings on the pane");
        for p in &apc.points.points {
            let on_any = scene.walls.iter().any(|w| w.plane_distance(p).abs() < 1e-6 && w.contains_projection(p, 1e-6));
            assert!(on_any, "ping point {p:?} is on no rectangle");
        }
    }

    #[test]
    fn sweep_backs_off_to_fit_small_rooms() {
        let scene = pane_room();
        let g = scene.glass[0];
        let traj = sweep_past(&g, 10.0, 0.0, 0.5, 10.0, &scene.bounds).unwrap();
        for s in &traj {
            let eye = s.pose.transform_point(&Vec3::zeros());
            assert!(scene.bounds.contains(&eye));
            assert!((eye.y - (4.0 - 2e-3)).abs() < 1e-9, "{eye:?}");
        }
    }
}
