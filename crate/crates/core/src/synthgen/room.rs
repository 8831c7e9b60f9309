use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Rect, TriMesh, Vec3};
use crate::rng;

/// Procedural box room occupying `[0, w] × [0, d] × [0, h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub seed: u64,
    pub footprint: (f64, f64),
    pub wall_height: f64,
    pub clutter_count: usize,
}

pub const MIN_WALL_HEIGHT: f64 = 2.0;

// clutter keeps this far from the walls so it never enters a carve slab
const CLUTTER_WALL_GAP: f64 = 0.3;

impl RoomSpec {
    pub fn validate(&self, crop_size: &Vec3) -> Result<()> {
        let (w, d) = self.footprint;
        if !(w >= crop_size.x && d >= crop_size.y) {
            return Err(Error::InvalidInput(format!(
                "footprint ({w}, {d}) smaller than crop ({}, {})",
                crop_size.x, crop_size.y
            )));
        }
        if !(self.wall_height >= MIN_WALL_HEIGHT) || !self.wall_height.is_finite() {
            return Err(Error::InvalidInput(format!(
                "wall height {} below {MIN_WALL_HEIGHT} m",
                self.wall_height
            )));
        }
        Ok(())
    }
}

fn axis(a: usize, len: f64) -> Vec3 {
    let mut v = Vec3::zeros();
    v[a] = len;
    v
}

/// The six faces of an axis-aligned box, normals pointing out of the box
/// when `outward`, into it otherwise.
fn box_faces(lo: Vec3, hi: Vec3, outward: bool) -> Vec<Rect> {
    let c = (lo + hi) * 0.5;
    let h = (hi - lo) * 0.5;
    let mut out = Vec::with_capacity(6);
    // z, x, y ordering: floor/ceiling first, then walls
    for a in [2usize, 0, 1] {
        let (b, e) = ((a + 1) % 3, (a + 2) % 3);
        for side in [-1.0, 1.0] {
            let mut center = c;
            center[a] += side * h[a];
            // half_u × half_v is +axis(a); flip to make it point where asked
            let into_box = -side;
            let sign = if outward { -into_box } else { into_box };
            let (u, v) = (axis(b, h[b]), axis(e, h[e]));
            let (u, v) = if sign > 0.0 { (u, v) } else { (v, u) };
            out.push(Rect {
                center,
                half_u: u,
                half_v: v,
            });
        }
    }
    out
}

/// Rectangular surfaces of the room: floor, ceiling, the four walls (in
/// that order, inward normals) and then six faces per clutter box.
pub fn room_rects(spec: &RoomSpec) -> Vec<Rect> {
    let (w, d) = spec.footprint;
    let h = spec.wall_height;
    let mut rects = box_faces(Vec3::zeros(), Vec3::new(w, d, h), false);
    let mut rng = rng::substream(spec.seed, "room.clutter", 0);
    for _ in 0..spec.clutter_count {
        let sx = rng.random_range(0.3..1.0f64).min(w - 2.0 * CLUTTER_WALL_GAP);
        let sy = rng.random_range(0.3..1.0f64).min(d - 2.0 * CLUTTER_WALL_GAP);
        let sz = rng.random_range(0.4..1.2f64).min(h - 0.5);
        let x = rng.random_range(CLUTTER_WALL_GAP..=(w - CLUTTER_WALL_GAP - sx));
        let y = rng.random_range(CLUTTER_WALL_GAP..=(d - CLUTTER_WALL_GAP - sy));
        rects.extend(box_faces(
            Vec3::new(x, y, 0.0),
            Vec3::new(x + sx, y + sy, sz),
            true,
        ));
    }
    rects
}

/// The four vertical walls of the room.
pub fn wall_rects(spec: &RoomSpec) -> Vec<Rect> {
    room_rects(spec)[2..6].to_vec()
}

/// Triangulated room with coincident corners welded, so the bare room is a
/// closed surface.
pub fn generate_room(spec: &RoomSpec) -> TriMesh {
    let mut mesh = TriMesh::default();
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    for r in room_rects(spec) {
        let ids = r.corners().map(|c| {
            let key = [0, 1, 2].map(|a| (c[a] * 1e9).round() as i64);
            *index.entry(key).or_insert_with(|| {
                mesh.vertices.push(c);
                mesh.vertices.len() - 1
            })
        });
        mesh.faces.push([ids[0], ids[1], ids[2]]);
        mesh.faces.push([ids[0], ids[2], ids[3]]);
    }
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(clutter: usize) -> RoomSpec {
        RoomSpec {
            seed: 11,
            footprint: (4.0, 4.0),
            wall_height: 3.0,
            clutter_count: clutter,
        }
    }

    #[test]
    fn bare_room_has_six_faces_and_box_area() {
        let s = spec(0);
        assert_eq!(room_rects(&s).len(), 6);
        let m = generate_room(&s);
        assert_eq!(m.faces.len(), 12);
        assert!((m.area() - 80.0).abs() < 1e-6);
        assert!(m.is_closed());
        // inward normals: the enclosed volume is negative
        assert!(m.signed_volume() < 0.0);
        assert!((m.signed_volume() + 48.0).abs() < 1e-9);
    }

    #[test]
    fn walls_face_inward() {
        let s = spec(0);
        let mid = Vec3::new(2.0, 2.0, 1.5);
        for r in room_rects(&s) {
            assert!((mid - r.center).dot(&r.normal()) > 0.0);
        }
        for w in wall_rects(&s) {
            assert!(w.normal().z.abs() < 1e-12);
        }
    }

    #[test]
    fn clutter_is_deterministic_and_inside() {
        let s = spec(3);
        let a = generate_room(&s);
        assert_eq!(a, generate_room(&s));
        assert_eq!(room_rects(&s).len(), 6 + 18);
        for v in &a.vertices {
            assert!(v.x >= -1e-12 && v.x <= 4.0 + 1e-12);
            assert!(v.y >= -1e-12 && v.y <= 4.0 + 1e-12);
        }
        let boxes = &room_rects(&s)[6..];
        for r in boxes {
            // outward normals of clutter faces point away from the box center
            let i = boxes.iter().position(|b| b == r).unwrap() / 6;
            let cube = &boxes[i * 6..i * 6 + 6];
            let c = cube.iter().map(|f| f.center).sum::<Vec3>() / 6.0;
            assert!((r.center - c).dot(&r.normal()) > 0.0);
        }
    }

    #[test]
    fn validation() {
        let crop = Vec3::new(3.0, 3.0, 4.0);
        assert!(spec(0).validate(&crop).is_ok());
        let mut s = spec(0);
        s.footprint.0 = 2.5;
        assert!(s.validate(&crop).is_err());
        let mut s = spec(0);
        s.wall_height = 1.5;
        assert!(s.validate(&crop).is_err());
    }
}
