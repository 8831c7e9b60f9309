//! Acoustic-semantic planar projection.
//!
//! Every acoustic return anchors a vertical pillar of radius ε. Camera rays
//! through glass-labelled pixels that pass within ε of the pillar axis (in
//! the xy-plane) contribute their closest-approach points, and the pillar's
//! vertical extent spans those points. The emitted point set seeds the
//! transparent-surface supervision at inference time.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{pixel_to_ray, ply, PointCloud, Ray, Vec3};
use crate::ingest::{FrameRecord, GlassMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsppConfig {
    /// Pillar radius in the xy-plane, meters.
    pub epsilon: f64,
    /// Largest ray parameter considered, meters.
    pub t_max: f64,
    /// Pixel stride when turning masks into rays.
    pub stride: u32,
    /// Vertical spacing of axis fill points, meters.
    pub spacing: f64,
}

impl Default for AsppConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.15,
            t_max: 10.0,
            stride: 8,
            spacing: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticRay {
    pub ray: Ray,
    pub frame: usize,
    pub pixel: (u32, u32),
}

#[derive(Debug, Clone, Default)]
pub struct SemanticRaySet {
    pub rays: Vec<SemanticRay>,
}

impl SemanticRaySet {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// One world ray per glass pixel on the `stride` lattice (pixels whose
/// coordinates are both multiples of `stride`).
pub fn glass_rays(frames: &[FrameRecord], masks: &[GlassMask], stride: u32) -> Result<SemanticRaySet> {
    if frames.len() != masks.len() {
        return Err(Error::Mismatch(format!("{} frames but {} masks", frames.len(), masks.len())));
    }
    if stride == 0 {
        return Err(Error::InvalidInput("ray stride must be positive".into()));
    }
    let mut set = SemanticRaySet::default();
    for (fi, (frame, mask)) in frames.iter().zip(masks).enumerate() {
        let intr = &frame.intrinsics;
        if (mask.width, mask.height) != (intr.width, intr.height) {
            return Err(Error::Mismatch(format!(
                "frame {fi}: mask is {}x{}, intrinsics {}x{}",
                mask.width, mask.height, intr.width, intr.height
            )));
        }
        for v in (0..mask.height).step_by(stride as usize) {
            for u in (0..mask.width).step_by(stride as usize) {
                if mask.get(u, v) {
                    let ray = pixel_to_ray(intr, &frame.pose, f64::from(u), f64::from(v))?;
                    set.rays.push(SemanticRay {
                        ray,
                        frame: fi,
                        pixel: (u, v),
                    });
                }
            }
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pillar {
    /// Index of the anchoring acoustic point.
    pub apc_index: usize,
    pub apc_point: Vec3,
    pub axis_xy: [f64; 2],
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Indices into the ray set, ascending.
    pub support: Vec<usize>,
    /// Closest-approach point of each supporting ray.
    pub support_points: Vec<Vec3>,
}

impl Pillar {
    /// No semantic ray reached this pillar; it keeps only its acoustic point.
    pub fn is_degenerate(&self) -> bool {
        self.support.is_empty()
    }
}

/// Closest approach of `ray` to the vertical line through `axis`, measured
/// in the xy-plane. Returns `(t, xy distance)`; `None` for vertical rays.
pub fn xy_closest_approach(ray: &Ray, axis: [f64; 2]) -> Option<(f64, f64)> {
    let (dx, dy) = (ray.direction.x, ray.direction.y);
    let d2 = dx * dx + dy * dy;
    if d2 < 1e-18 {
        return None;
    }
    let (rx, ry) = (axis[0] - ray.origin.x, axis[1] - ray.origin.y);
    let t = (rx * dx + ry * dy) / d2;
    let (ex, ey) = (ray.origin.x + t * dx - axis[0], ray.origin.y + t * dy - axis[1]);
    Some((t, (ex * ex + ey * ey).sqrt()))
}

pub fn build_pillars(apc: &[Vec3], rays: &SemanticRaySet, epsilon: f64, t_max: f64) -> Result<Vec<Pillar>> {
    if !(epsilon > 0.0) || !(t_max > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon ({epsilon}) and t_max ({t_max}) must be positive"
        )));
    }
    Ok(apc
        .par_iter()
        .enumerate()
        .map(|(ai, a)| {
            let axis = [a.x, a.y];
            let mut support = Vec::new();
            let mut support_points = Vec::new();
            for (ri, sr) in rays.rays.iter().enumerate() {
                if let Some((t, dist)) = xy_closest_approach(&sr.ray, axis) {
                    if t > 0.0 && t <= t_max && dist <= epsilon {
                        support.push(ri);
                        support_points.push(sr.ray.at(t));
                    }
                }
            }
            let (z_min, z_max) = if support_points.is_empty() {
                (a.z, a.z)
            } else {
                support_points
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)))
            };
            Pillar {
                apc_index: ai,
                apc_point: *a,
                axis_xy: axis,
                radius: epsilon,
                z_min,
                z_max,
                support,
                support_points,
            }
        })
        .collect())
}

/// Projected point set with the pillar each point came from.
#[derive(Debug, Clone, Default)]
pub struct AsppPoints {
    pub points: PointCloud,
    pub pillar: Vec<usize>,
}

impl AsppPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_ply(&self, path: impl AsRef<Path>, format: ply::Format) -> Result<()> {
        let ids: Vec<i32> = self.pillar.iter().map(|&p| p as i32).collect();
        ply::write_cloud(
            path,
            &self.points,
            format,
            Some(ply::IntProperty {
                name: "pillar_id",
                values: &ids,
            }),
        )
    }
}

/// Support points of every pillar followed by axis fill points from
/// `z_min` to `z_max` every `spacing`; degenerate pillars emit their
/// acoustic point only.
pub fn sample_aspp(pillars: &[Pillar], spacing: f64) -> Result<AsppPoints> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidInput(format!("fill spacing {spacing} must be positive")));
    }
    let mut out = AsppPoints::default();
    for (pi, p) in pillars.iter().enumerate() {
        if p.is_degenerate() {
            out.points.points.push(p.apc_point);
            out.pillar.push(pi);
            continue;
        }
        for sp in &p.support_points {
            out.points.points.push(*sp);
            out.pillar.push(pi);
        }
        let steps = ((p.z_max - p.z_min) / spacing + 1e-9).floor() as usize;
        for k in 0..=steps {
            out.points
                .points
                .push(Vec3::new(p.axis_xy[0], p.axis_xy[1], p.z_min + k as f64 * spacing));
            out.pillar.push(pi);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{CameraIntrinsics, PoseSE3};
    use proptest::prelude::*;

    fn frame(w: u32, h: u32, cx: f64, cy: f64) -> FrameRecord {
        FrameRecord {
            timestamp: 0.0,
            pose: PoseSE3::identity(),
            mask_path: "m.png".into(),
            intrinsics: CameraIntrinsics::new(1.0, 1.0, cx, cy, w, h).unwrap(),
        }
    }

    fn three_rays() -> SemanticRaySet {
        let rays = [0.5, 1.0, 1.5]
            .iter()
            .enumerate()
            .map(|(i, &z)| SemanticRay {
                ray: Ray::new(Vec3::zeros(), Vec3::new(2.0, 0.0, z)).unwrap(),
                frame: 0,
                pixel: (i as u32, 0),
            })
            .collect();
        SemanticRaySet { rays }
    }

    #[test]
    fn empty_mask_gives_no_rays() {
        let set = glass_rays(&[frame(4, 4, 0.0, 0.0)], &[GlassMask::empty(4, 4)], 1).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn principal_point_pixel_ray() {
        let mut m = GlassMask::empty(4, 4);
        m.set(2, 1, true);
        let set = glass_rays(&[frame(4, 4, 2.0, 1.0)], &[m], 1).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.rays[0].ray.direction, Vec3::z());
    }

    #[test]
    fn strided_full_mask() {
        let m = GlassMask::new(4, 4, vec![true; 16]).unwrap();
        let set = glass_rays(&[frame(4, 4, 0.0, 0.0)], &[m], 2).unwrap();
        let px: Vec<_> = set.rays.iter().map(|r| r.pixel).collect();
        assert_eq!(px, vec![(0, 0), (2, 0), (0, 2), (2, 2)]);
    }

    #[test]
    fn mismatched_mask_rejected() {
        assert!(glass_rays(&[frame(4, 4, 0.0, 0.0)], &[GlassMask::empty(3, 4)], 1).is_err());
    }

    #[test]
    fn three_ray_pillar() {
        let pillars = build_pillars(&[Vec3::new(2.0, 0.0, 1.0)], &three_rays(), 0.1, 10.0).unwrap();
        assert_eq!(pillars.len(), 1);
        let p = &pillars[0];
        // unit-normalised directions cost a few ulps
        assert!((p.z_min - 0.5).abs() < 1e-12 && (p.z_max - 1.5).abs() < 1e-12, "{:?}", (p.z_min, p.z_max));
        assert_eq!(p.support, vec![0, 1, 2]);
        for sp in &p.support_points {
            assert!((sp.x - 2.0).abs() < 1e-12 && sp.y.abs() < 1e-12);
        }
    }

    #[test]
    fn no_rays_or_far_rays_give_degenerate_pillars() {
        let apc = [Vec3::new(2.0, 0.0, 1.0), Vec3::new(0.0, 3.0, 0.5)];
        let none = build_pillars(&apc, &SemanticRaySet::default(), 0.1, 10.0).unwrap();
        assert!(none.iter().all(Pillar::is_degenerate));
        assert_eq!((none[1].z_min, none[1].z_max), (0.5, 0.5));

        let off = SemanticRaySet {
            rays: vec![SemanticRay {
                ray: Ray::new(Vec3::new(0.0, 0.2, 0.0), Vec3::x()).unwrap(),
                frame: 0,
                pixel: (0, 0),
            }],
        };
        let p = build_pillars(&apc[..1], &off, 0.1, 10.0).unwrap();
        assert!(p[0].is_degenerate());
    }

    #[test]
    fn rays_behind_or_beyond_t_max_ignored() {
        let behind = SemanticRaySet {
            rays: vec![SemanticRay {
                ray: Ray::new(Vec3::new(4.0, 0.0, 0.0), Vec3::x()).unwrap(),
                frame: 0,
                pixel: (0, 0),
            }],
        };
        assert!(build_pillars(&[Vec3::new(2.0, 0.0, 1.0)], &behind, 0.1, 10.0).unwrap()[0].is_degenerate());
        assert!(build_pillars(&[Vec3::new(2.0, 0.0, 1.0)], &three_rays(), 0.1, 1.0).unwrap()[0].is_degenerate());
    }

    #[test]
    fn fill_points_and_degenerate_output() {
        let pillars = build_pillars(&[Vec3::new(2.0, 0.0, 1.0)], &three_rays(), 0.1, 10.0).unwrap();
        let pts = sample_aspp(&pillars, 0.5).unwrap();
        let fill: Vec<f64> = pts.points.points[3..].iter().map(|p| p.z).collect();
        assert_eq!(fill, vec![0.5, 1.0, 1.5]);
        assert_eq!(pts.len(), 6);

        let deg = build_pillars(&[Vec3::new(2.0, 0.0, 1.0)], &SemanticRaySet::default(), 0.1, 10.0).unwrap();
        assert_eq!(sample_aspp(&deg, 0.05).unwrap().points.points, vec![Vec3::new(2.0, 0.0, 1.0)]);
    }

    #[test]
    fn duplicate_pillars_duplicate_output() {
        let mut pillars = build_pillars(&[Vec3::new(2.0, 0.0, 1.0)], &three_rays(), 0.1, 10.0).unwrap();
        let single = sample_aspp(&pillars, 0.25).unwrap();
        pillars.push(pillars[0].clone());
        let double = sample_aspp(&pillars, 0.25).unwrap();
        assert_eq!(double.len(), 2 * single.len());
        assert_eq!(&double.points.points[single.len()..], &single.points.points[..]);
    }

    fn random_rays(seed: u64, n: usize) -> SemanticRaySet {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        SemanticRaySet {
            rays: (0..n)
                .map(|i| {
                    let o = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.2);
                    let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5));
                    SemanticRay { ray: Ray::new(o, d).unwrap(), frame: 0, pixel: (i as u32, 0) }
                })
                .collect(),
        }
    }

    proptest! {
        #[test]
        fn shrinking_epsilon_never_adds_support(seed in 0u64..1000, e1 in 0.01f64..0.5, e2 in 0.01f64..0.5) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let rays = random_rays(seed, 60);
            let apc = [Vec3::new(0.5, 0.3, 1.0), Vec3::new(-0.7, 0.1, 0.4)];
            let a = build_pillars(&apc, &rays, lo, 10.0).unwrap();
            let b = build_pillars(&apc, &rays, hi, 10.0).unwrap();
            for (pa, pb) in a.iter().zip(&b) {
                prop_assert!(pa.support.iter().all(|r| pb.support.contains(r)));
            }
        }

        #[test]
        fn extents_and_radii_hold(seed in 0u64..1000, eps in 0.05f64..0.5) {
            let rays = random_rays(seed, 80);
            let apc = [Vec3::new(0.5, 0.3, 1.0), Vec3::new(1.5, -0.4, 0.9)];
            let pillars = build_pillars(&apc, &rays, eps, 10.0).unwrap();
            for p in pillars.iter().filter(|p| !p.is_degenerate()) {
                let lo = p.support_points.iter().map(|q| q.z).fold(f64::INFINITY, f64::min);
                let hi = p.support_points.iter().map(|q| q.z).fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!((p.z_min, p.z_max), (lo, hi));
            }
            let pts = sample_aspp(&pillars, 0.05).unwrap();
            for (q, &pi) in pts.points.points.iter().zip(&pts.pillar) {
                let p = &pillars[pi];
                let d = ((q.x - p.axis_xy[0]).powi(2) + (q.y - p.axis_xy[1]).powi(2)).sqrt();
                prop_assert!(d <= eps + 1e-6);
                prop_assert!(q.z >= p.z_min - 1e-6 && q.z <= p.z_max + 1e-6);
            }
        }
    }
}
