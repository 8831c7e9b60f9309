//! Procedural training data: box rooms with glass cut into the walls.

mod crop;
mod glass;
mod room;
mod sample;

use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crop::crop_scene;
pub use glass::{carve_glass, GlassKind, GlassSpec};
pub use room::{generate_room, room_rects, wall_rects, RoomSpec, MIN_WALL_HEIGHT};
pub use sample::{sample_free_space, sample_surface, sample_surface_with_faces};

use crate::density::DensitySampleSet;
use crate::error::{Error, Result};
use crate::geom::{ply, Aabb, PointCloud, Rect, TriMesh, Vec3};
use crate::rng;

// glass keeps this far from the ends of the wall it sits on
const EDGE_GAP: f64 = 0.05;
// minimum distance between a window top and the ceiling
const WINDOW_TOP_GAP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KindWeights {
    pub full_pane: f64,
    pub half_pane: f64,
    pub window: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        Self {
            full_pane: 1.0,
            half_pane: 1.0,
            window: 1.0,
        }
    }
}

impl KindWeights {
    fn as_array(&self) -> [f64; 3] {
        [self.full_pane, self.half_pane, self.window]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub crop_size: [f64; 3],
    pub points_per_scene: usize,
    /// Free-space samples per surface sample.
    pub free_ratio: f64,
    pub free_clearance: f64,
    pub carve_margin: f64,
    pub sigma_max: f64,
    pub glass_count: (usize, usize),
    pub glass_kind_weights: KindWeights,
    pub glass_width: (f64, f64),
    pub half_pane_height: (f64, f64),
    pub window_height: (f64, f64),
    pub window_sill: (f64, f64),
    pub footprint: (f64, f64),
    pub wall_height: (f64, f64),
    pub clutter_count: (usize, usize),
    /// Offset of the crop grid below the room's minimum corner.
    pub crop_pad: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            crop_size: [3.0, 3.0, 4.0],
            points_per_scene: 10_000,
            free_ratio: 1.0,
            free_clearance: 0.26,
            carve_margin: 0.05,
            sigma_max: 100.0,
            glass_count: (1, 3),
            glass_kind_weights: KindWeights::default(),
            glass_width: (0.8, 2.0),
            half_pane_height: (1.0, 1.6),
            window_height: (0.6, 1.2),
            window_sill: (0.7, 1.2),
            footprint: (3.0, 4.5),
            wall_height: (2.5, 3.5),
            clutter_count: (0, 2),
            crop_pad: 0.2,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), min: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo >= min && lo <= hi) {
        return Err(Error::InvalidInput(format!(
            "{name} range ({lo}, {hi}) must be ordered and ≥ {min}"
        )));
    }
    Ok(())
}

impl SynthConfig {
    pub fn crop_size(&self) -> Vec3 {
        Vec3::from(self.crop_size)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.crop_size.iter().all(|c| c.is_finite() && *c > 0.0) {
            return Err(Error::InvalidInput("crop_size must be positive".into()));
        }
        if self.points_per_scene == 0 {
            return Err(Error::InvalidInput("points_per_scene must be ≥ 1".into()));
        }
        if !(self.free_ratio >= 0.0 && self.free_ratio.is_finite()) {
            return Err(Error::InvalidInput("free_ratio must be ≥ 0".into()));
        }
        if !(self.free_clearance > 0.0) {
            return Err(Error::InvalidInput("free_clearance must be > 0".into()));
        }
        if !(self.carve_margin >= 0.0) {
            return Err(Error::InvalidInput("carve_margin must be ≥ 0".into()));
        }
        if !(self.sigma_max > 0.0 && self.sigma_max.is_finite()) {
            return Err(Error::InvalidInput("sigma_max must be > 0".into()));
        }
        if self.glass_count.0 > self.glass_count.1 {
            return Err(Error::InvalidInput("glass_count range is reversed".into()));
        }
        let w = self.glass_kind_weights.as_array();
        if !(w.iter().all(|x| *x >= 0.0 && x.is_finite()) && w.iter().sum::<f64>() > 0.0) {
            return Err(Error::InvalidInput(
                "glass_kind_weights must be non-negative with a positive sum".into(),
            ));
        }
        check_range("glass_width", self.glass_width, 1e-3)?;
        check_range("half_pane_height", self.half_pane_height, 1e-3)?;
        check_range("window_height", self.window_height, 1e-3)?;
        check_range("window_sill", self.window_sill, 0.0)?;
        check_range("wall_height", self.wall_height, MIN_WALL_HEIGHT)?;
        let min_fp = self.crop_size[0].max(self.crop_size[1]);
        check_range("footprint", self.footprint, min_fp)?;
        if self.clutter_count.0 > self.clutter_count.1 {
            return Err(Error::InvalidInput("clutter_count range is reversed".into()));
        }
        if !(self.crop_pad >= 0.0) {
            return Err(Error::InvalidInput("crop_pad must be ≥ 0".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything about a scene that is decided before any point is sampled.
/// Coordinates are in the room frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneLayout {
    pub index: usize,
    pub room: Option<RoomSpec>,
    pub crop_origin: Vec3,
    pub glass: Vec<GlassSpec>,
}

fn uniform(rng: &mut rng::Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn horizontal_half_width(r: &Rect) -> f64 {
    let t = Vec3::z().cross(&r.normal()).normalize();
    r.half_u.dot(&t).abs().max(r.half_v.dot(&t).abs())
}

fn z_range(r: &Rect) -> (f64, f64) {
    let hz = r.half_u.z.abs() + r.half_v.z.abs();
    (r.center.z - hz, r.center.z + hz)
}

fn place_glass(cfg: &SynthConfig, walls: &[Rect], rng: &mut rng::Rng) -> Result<GlassSpec> {
    let need = cfg.glass_width.0 + 2.0 * EDGE_GAP;
    let usable: Vec<&Rect> = walls
        .iter()
        .filter(|w| 2.0 * horizontal_half_width(w) >= need)
        .collect();
    let wall = *usable
        .get(rng.random_range(0..usable.len().max(1)))
        .ok_or_else(|| Error::SamplingFailed("no wall inside the crop can hold glass".into()))?;
    let kinds = WeightedIndex::new(cfg.glass_kind_weights.as_array())
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let kind = GlassKind::ALL[kinds.sample(rng)];

    let normal = wall.normal();
    let tangent = Vec3::z().cross(&normal).normalize();
    let avail = 2.0 * horizontal_half_width(wall) - 2.0 * EDGE_GAP;
    let width = uniform(rng, (cfg.glass_width.0, cfg.glass_width.1.min(avail)));
    let slack = 0.5 * (avail - width);
    let along = uniform(rng, (-slack, slack));

    let (zlo, zhi) = z_range(wall);
    let span = zhi - zlo;
    let (bottom, height) = match kind {
        GlassKind::FullPane => (zlo, span),
        GlassKind::HalfPane => (zlo, uniform(rng, cfg.half_pane_height).min(span)),
        GlassKind::Window => {
            let sill = uniform(rng, cfg.window_sill);
            let room_for = zhi - WINDOW_TOP_GAP - sill;
            if room_for >= cfg.window_height.0 {
                (sill, uniform(rng, (cfg.window_height.0, cfg.window_height.1.min(room_for))))
            } else {
                let h = cfg.window_height.0.min(span - 2.0 * WINDOW_TOP_GAP);
                if h <= 0.0 {
                    return Err(Error::SamplingFailed("wall too short for a window".into()));
                }
                ((zhi - WINDOW_TOP_GAP - h).max(zlo + WINDOW_TOP_GAP), h)
            }
        }
    };
    let mut center = wall.center + tangent * along;
    center.z = bottom + 0.5 * height;
    Ok(GlassSpec {
        kind,
        center,
        width,
        height,
        wall_normal: normal,
    })
}

/// Draws the room, the crop window and the glass for scene `index`.
pub fn plan_scene(cfg: &SynthConfig, seed: u64, index: usize) -> Result<SceneLayout> {
    let mut rng = rng::substream(seed, "synthgen.layout", index as u64);
    let room = RoomSpec {
        seed: rng::derive_seed(seed, "synthgen.room", index as u64),
        footprint: (uniform(&mut rng, cfg.footprint), uniform(&mut rng, cfg.footprint)),
        wall_height: uniform(&mut rng, cfg.wall_height),
        clutter_count: rng.random_range(cfg.clutter_count.0..=cfg.clutter_count.1),
    };
    let size = cfg.crop_size();
    room.validate(&size)?;

    let windows = |extent: f64, step: f64| {
        let n = ((extent + cfg.crop_pad) / step).ceil().max(1.0) as usize;
        (0..n).map(move |k| -cfg.crop_pad + k as f64 * step)
    };
    let mut origins: Vec<Vec3> = windows(room.footprint.0, size.x)
        .flat_map(|x| windows(room.footprint.1, size.y).map(move |y| Vec3::new(x, y, -cfg.crop_pad)))
        .collect();
    origins.shuffle(&mut rng);

    let walls = wall_rects(&room);
    let need = cfg.glass_width.0 + 2.0 * EDGE_GAP;
    for origin in origins {
        let bounds = Aabb::from_origin_size(origin, size)?;
        let inside: Vec<Rect> = walls
            .iter()
            .filter_map(|w| w.clip_axis_aligned(&bounds))
            .filter(|w| 2.0 * horizontal_half_width(w) >= need)
            .collect();
        if inside.is_empty() {
            continue;
        }
        let count = rng.random_range(cfg.glass_count.0..=cfg.glass_count.1);
        let glass = (0..count)
            .map(|_| place_glass(cfg, &inside, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        return Ok(SceneLayout {
            index,
            room: Some(room),
            crop_origin: origin,
            glass,
        });
    }
    Err(Error::SamplingFailed(format!(
        "scene {index}: no crop window contains a wall wide enough for glass"
    )))
}

/// One training example in crop-local coordinates, bounds `[0, crop_size]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePair {
    pub layout: SceneLayout,
    pub bounds: Aabb,
    /// Glass in crop-local coordinates.
    pub glass: Vec<GlassSpec>,
    /// Opaque surface points `X_s`.
    pub scene_surface: PointCloud,
    /// Glass cutout points `X_t`.
    pub trans_surface: PointCloud,
    /// Free-space points, density 0.
    pub free: PointCloud,
    pub sigma_max: f64,
}

impl ScenePair {
    /// `X_s` at `σ_max` plus free space at 0.
    pub fn scene_samples(&self) -> DensitySampleSet {
        DensitySampleSet::from_clouds(&[(&self.scene_surface, self.sigma_max), (&self.free, 0.0)])
    }

    /// Cutout points at `σ_max`.
    pub fn trans_samples(&self) -> DensitySampleSet {
        DensitySampleSet::from_clouds(&[(&self.trans_surface, self.sigma_max)])
    }

    /// Cutout points at `σ_max` plus zero-density negatives: about
    /// `neg_ratio·|X_t|` points drawn evenly from the opaque surface and
    /// from free space. This is what the transparent decoder is fit to.
    pub fn trans_training_samples(&self, neg_ratio: f64, seed: u64) -> DensitySampleSet {
        let k = (neg_ratio * self.trans_surface.len() as f64).round() as usize;
        let mut rng = rng::substream(seed, "synthgen.negatives", self.layout.index as u64);
        let mut pick = |c: &PointCloud, n: usize| {
            let mut idx = rand::seq::index::sample(&mut rng, c.len(), n.min(c.len())).into_vec();
            idx.sort_unstable();
            PointCloud::new(idx.into_iter().map(|i| c.points[i]).collect())
        };
        let opaque = pick(&self.scene_surface, k / 2);
        let free = pick(&self.free, k - k / 2);
        DensitySampleSet::from_clouds(&[(&self.trans_surface, self.sigma_max), (&opaque, 0.0), (&free, 0.0)])
    }

    /// Opaque room rectangles clipped to the crop, crop-local. Glass is
    /// not cut out of them.
    pub fn opaque_rects(&self) -> Vec<Rect> {
        let Some(room) = &self.layout.room else {
            return Vec::new();
        };
        let world = Aabb {
            min: self.layout.crop_origin,
            max: self.layout.crop_origin + self.bounds.size(),
        };
        room_rects(room)
            .iter()
            .filter_map(|r| r.clip_axis_aligned(&world))
            .map(|r| r.translated(&-self.layout.crop_origin))
            .collect()
    }
}

fn realize(
    cfg: &SynthConfig,
    seed: u64,
    layout: SceneLayout,
    mesh: &TriMesh,
    walls: &[Rect],
) -> Result<ScenePair> {
    let size = cfg.crop_size();
    let idx = layout.index as u64;
    let cropped = crop_scene(mesh, layout.crop_origin, size)?;
    let cloud = sample_surface(&cropped, cfg.points_per_scene, rng::derive_seed(seed, "synthgen.surface", idx))?;
    let (xs, xt) = carve_glass(&cloud, &layout.glass, walls, cfg.carve_margin)?;
    let shift = -layout.crop_origin;
    let local = |c: PointCloud| PointCloud::new(c.points.into_iter().map(|p| p + shift).collect());
    let (xs, xt) = (local(xs), local(xt));
    let bounds = Aabb::from_origin_size(Vec3::zeros(), size)?;
    let mut surfaces = xs.clone();
    surfaces.extend(&xt);
    let n_free = (cfg.free_ratio * cfg.points_per_scene as f64).round() as usize;
    let free = sample_free_space(
        &bounds,
        n_free,
        &surfaces,
        cfg.free_clearance,
        rng::derive_seed(seed, "synthgen.free", idx),
    )?;
    let glass = layout.glass.iter().map(|g| g.translated(&shift)).collect();
    Ok(ScenePair {
        layout,
        bounds,
        glass,
        scene_surface: xs,
        trans_surface: xt,
        free,
        sigma_max: cfg.sigma_max,
    })
}

/// Builds scene `index` of the dataset seeded by `seed`.
pub fn generate_pair(cfg: &SynthConfig, seed: u64, index: usize) -> Result<ScenePair> {
    let layout = plan_scene(cfg, seed, index)?;
    let room = layout.room.clone().expect("planned scenes have a room");
    realize(cfg, seed, layout, &generate_room(&room), &wall_rects(&room))
}

/// Builds a pair from an arbitrary mesh with user-placed glass, both in the
/// mesh frame. Each glass rectangle must be coplanar with some triangle of
/// the mesh.
pub fn pair_from_mesh(
    cfg: &SynthConfig,
    seed: u64,
    mesh: &TriMesh,
    crop_origin: Vec3,
    glass: Vec<GlassSpec>,
) -> Result<ScenePair> {
    for (i, g) in glass.iter().enumerate() {
        g.validate()?;
        let on_mesh = (0..mesh.faces.len()).any(|f| {
            let [a, b, c] = mesh.triangle(f);
            let n = (b - a).cross(&(c - a));
            let len = n.norm();
            len > 0.0 && {
                let n = n / len;
                n.dot(&g.wall_normal).abs() > 1.0 - 1e-6 && (g.center - a).dot(&n).abs() < 1e-6
            }
        });
        if !on_mesh {
            return Err(Error::InvalidInput(format!("glass {i} is not on any mesh face")));
        }
    }
    let walls: Vec<Rect> = glass.iter().map(|g| g.rect()).collect();
    let layout = SceneLayout {
        index: 0,
        room: None,
        crop_origin,
        glass,
    };
    realize(cfg, seed, layout, mesh, &walls)
}

/// Generates `count` scenes; scene `i` depends only on `(seed, cfg, i)`.
pub fn make_dataset(count: usize, cfg: &SynthConfig, seed: u64) -> Result<Vec<ScenePair>> {
    cfg.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| generate_pair(cfg, seed, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneMeta {
    seed: u64,
    layout: SceneLayout,
    bounds: Aabb,
    glass: Vec<GlassSpec>,
    sigma_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetIndex {
    seed: u64,
    count: usize,
    config: SynthConfig,
    scenes: Vec<String>,
}

/// A dataset loaded back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub config: SynthConfig,
    pub scenes: Vec<ScenePair>,
}

pub fn scene_dir_name(index: usize) -> String {
    format!("scene_{index:04}")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

pub fn write_dataset(dir: impl AsRef<Path>, pairs: &[ScenePair], cfg: &SynthConfig, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::with_capacity(pairs.len());
    for p in pairs {
        let name = scene_dir_name(p.layout.index);
        let sd = dir.join(&name);
        fs::create_dir_all(&sd).map_err(|e| Error::io(&sd, e))?;
        p.scene_surface.write_ply(sd.join("scene.ply"), ply::Format::BinaryLittleEndian)?;
        p.trans_surface.write_ply(sd.join("trans.ply"), ply::Format::BinaryLittleEndian)?;
        p.free.write_ply(sd.join("free.ply"), ply::Format::BinaryLittleEndian)?;
        write_json(
            &sd.join("meta.json"),
            &SceneMeta {
                seed,
                layout: p.layout.clone(),
                bounds: p.bounds,
                glass: p.glass.clone(),
                sigma_max: p.sigma_max,
            },
        )?;
        names.push(name);
    }
    write_json(
        &dir.join("dataset.json"),
        &DatasetIndex {
            seed,
            count: pairs.len(),
            config: cfg.clone(),
            scenes: names,
        },
    )
}

pub fn load_scene(dir: impl AsRef<Path>) -> Result<ScenePair> {
    let dir = dir.as_ref();
    let meta: SceneMeta = read_json(&dir.join("meta.json"))?;
    let read = |name: &str| -> Result<PointCloud> {
        let p: PathBuf = dir.join(name);
        PointCloud::read_ply(&p)
    };
    Ok(ScenePair {
        layout: meta.layout,
        bounds: meta.bounds,
        glass: meta.glass,
        scene_surface: read("scene.ply")?,
        trans_surface: read("trans.ply")?,
        free: read("free.ply")?,
        sigma_max: meta.sigma_max,
    })
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let index: DatasetIndex = read_json(&dir.join("dataset.json"))?;
    if index.scenes.len() != index.count {
        return Err(Error::Format(format!(
            "{}: count {} but {} scenes listed",
            dir.display(),
            index.count,
            index.scenes.len()
        )));
    }
    let scenes = index
        .scenes
        .iter()
        .map(|s| load_scene(dir.join(s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        seed: index.seed,
        config: index.config,
        scenes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            points_per_scene: 2_000,
            ..SynthConfig::default()
        }
    }

    fn check_invariants(p: &ScenePair, cfg: &SynthConfig) {
        assert_eq!(p.scene_surface.len() + p.trans_surface.len(), cfg.points_per_scene);
        let all = p
            .scene_surface
            .points
            .iter()
            .chain(&p.trans_surface.points)
            .chain(&p.free.points);
        for q in all {
            assert!(p.bounds.contains(q), "{q:?}");
        }
        for s in [p.scene_samples(), p.trans_samples(), p.trans_training_samples(2.0, 1)] {
            assert!(s.densities.iter().all(|d| *d == 0.0 || *d == p.sigma_max));
        }
        for q in &p.trans_surface.points {
            assert!(p
                .glass
                .iter()
                .any(|g| (q - g.center).dot(&g.wall_normal).abs() <= cfg.carve_margin));
        }
        // disjoint
        for q in &p.trans_surface.points {
            assert!(!p.scene_surface.points.contains(q));
        }
    }

    #[test]
    fn single_scene_is_deterministic_and_valid() {
        let cfg = small();
        let a = generate_pair(&cfg, 5, 0).unwrap();
        let b = generate_pair(&cfg, 5, 0).unwrap();
        assert_eq!(a, b);
        check_invariants(&a, &cfg);
        assert!(!a.trans_surface.is_empty());
        assert_eq!(a.free.len(), 2_000);
    }

    #[test]
    fn glass_kinds_respect_shape_rules() {
        let cfg = small();
        for i in 0..200 {
            let l = plan_scene(&cfg, 3, i).unwrap();
            let room = l.room.as_ref().unwrap();
            assert!((1..=3).contains(&l.glass.len()));
            for g in &l.glass {
                let bottom = g.center.z - 0.5 * g.height;
                let top = g.center.z + 0.5 * g.height;
                match g.kind {
                    GlassKind::FullPane => {
                        assert!(bottom.abs() < 1e-9 && (top - room.wall_height).abs() < 1e-9)
                    }
                    GlassKind::HalfPane => {
                        assert!(bottom.abs() < 1e-9);
                        assert!(g.height >= 1.0 - 1e-12 && g.height <= 1.6 + 1e-12);
                    }
                    GlassKind::Window => {
                        assert!(bottom > 0.0 && top < room.wall_height);
                    }
                }
                assert!(wall_rects(room).iter().any(|w| {
                    w.normal().dot(&g.wall_normal) > 1.0 - 1e-9
                        && w.plane_distance(&g.center).abs() < 1e-9
                        && g.rect().corners().iter().all(|c| w.contains_projection(c, 1e-9))
                }));
            }
        }
    }

    #[test]
    fn crop_contains_glass() {
        let cfg = small();
        for i in 0..100 {
            let l = plan_scene(&cfg, 8, i).unwrap();
            let b = Aabb::from_origin_size(l.crop_origin, cfg.crop_size()).unwrap();
            for g in &l.glass {
                for c in g.rect().corners() {
                    assert!(b.contains(&c));
                }
            }
        }
    }

    #[test]
    fn kind_frequencies_follow_weights() {
        let cfg = small();
        let mut counts = [0usize; 3];
        for i in 0..1000 {
            for g in plan_scene(&cfg, 21, i).unwrap().glass {
                counts[GlassKind::ALL.iter().position(|k| *k == g.kind).unwrap()] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        for c in counts {
            let f = c as f64 / total as f64;
            assert!((f - 1.0 / 3.0).abs() <= 0.05, "{counts:?}");
        }
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_ranges() {
        assert!(serde_json::from_str::<SynthConfig>(r#"{"bogus": 1}"#).is_err());
        let cfg: SynthConfig = serde_json::from_str(r#"{"points_per_scene": 50}"#).unwrap();
        assert_eq!(cfg.points_per_scene, 50);
        assert_eq!(cfg.crop_size, [3.0, 3.0, 4.0]);
        let bad = SynthConfig {
            footprint: (2.0, 4.0),
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn opaque_rects_cover_the_scene_surface() {
        let p = generate_pair(&small(), 2, 1).unwrap();
        let rects = p.opaque_rects();
        for q in &p.scene_surface.points {
            assert!(rects
                .iter()
                .any(|r| r.plane_distance(q).abs() < 1e-9 && r.contains_projection(q, 1e-9)));
        }
    }

    #[test]
    fn dataset_round_trip() {
        let cfg = SynthConfig {
            points_per_scene: 300,
            ..SynthConfig::default()
        };
        let pairs = make_dataset(3, &cfg, 4).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[1], generate_pair(&cfg, 4, 1).unwrap());
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &pairs, &cfg, 4).unwrap();
        assert!(dir.path().join("scene_0002/meta.json").exists());
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.scenes.len(), 3);
        assert_eq!(back.config, cfg);
        for (a, b) in pairs.iter().zip(&back.scenes) {
            assert_eq!(a.glass, b.glass);
            assert_eq!(a.trans_surface.len(), b.trans_surface.len());
            for (p, q) in a.scene_surface.points.iter().zip(&b.scene_surface.points) {
                assert!((p - q).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn imported_mesh_requires_glass_on_a_face() {
        let cfg = small();
        let spec = RoomSpec {
            seed: 0,
            footprint: (3.0, 3.0),
            wall_height: 3.0,
            clutter_count: 0,
        };
        let mesh = generate_room(&spec);
        let good = GlassSpec {
            kind: GlassKind::Window,
            center: Vec3::new(0.0, 1.5, 1.5),
            width: 1.0,
            height: 1.0,
            wall_normal: Vec3::x(),
        };
        let p = pair_from_mesh(&cfg, 1, &mesh, Vec3::new(-0.2, -0.2, -0.2), vec![good]).unwrap();
        check_invariants(&p, &cfg);
        let bad = GlassSpec {
            center: Vec3::new(0.7, 1.5, 1.5),
            ..good
        };
        assert!(pair_from_mesh(&cfg, 1, &mesh, Vec3::zeros(), vec![bad]).is_err());
    }
}
