use crate::error::{Error, Result};
use crate::geom::{Aabb, TriMesh, Vec3};

// clipped slivers thinner than this are dropped
const MIN_AREA: f64 = 1e-12;

fn clip_polygon(poly: &[Vec3], axis: usize, bound: f64, keep_below: bool) -> Vec<Vec3> {
    let inside = |p: &Vec3| {
        if keep_below {
            p[axis] <= bound
        } else {
            p[axis] >= bound
        }
    };
    let mut out = Vec::with_capacity(poly.len() + 2);
    for (i, cur) in poly.iter().enumerate() {
        let prev = &poly[(i + poly.len() - 1) % poly.len()];
        let (ci, pi) = (inside(cur), inside(prev));
        if ci != pi {
            let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
            let mut x = prev + (cur - prev) * t;
            x[axis] = bound;
            out.push(x);
        }
        if ci {
            out.push(*cur);
        }
    }
    out
}

/// Clips `mesh` to the axis-aligned box `[origin, origin + size]`.
pub fn crop_scene(mesh: &TriMesh, origin: Vec3, size: Vec3) -> Result<TriMesh> {
    let bounds = Aabb::from_origin_size(origin, size)?;
    if mesh.vertices.iter().all(|v| bounds.contains(v)) && !mesh.faces.is_empty() {
        return Ok(mesh.clone());
    }
    let mut out = TriMesh::default();
    for f in 0..mesh.faces.len() {
        let tri = mesh.triangle(f);
        if tri.iter().all(|v| bounds.contains(v)) {
            let base = out.vertices.len();
            out.vertices.extend_from_slice(&tri);
            out.faces.push([base, base + 1, base + 2]);
            continue;
        }
        let mut poly = tri.to_vec();
        for a in 0..3 {
            poly = clip_polygon(&poly, a, bounds.min[a], false);
            if poly.len() < 3 {
                break;
            }
            poly = clip_polygon(&poly, a, bounds.max[a], true);
            if poly.len() < 3 {
                break;
            }
        }
        if poly.len() < 3 {
            continue;
        }
        let base = out.vertices.len();
        let mut added = false;
        for k in 1..poly.len() - 1 {
            let area = 0.5 * (poly[k] - poly[0]).cross(&(poly[k + 1] - poly[0])).norm();
            if area > MIN_AREA {
                if !added {
                    out.vertices.extend_from_slice(&poly);
                    added = true;
                }
                out.faces.push([base, base + k, base + k + 1]);
            }
        }
    }
    if out.faces.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;

    const CROP: Vec3 = Vec3::new(3.0, 3.0, 4.0);

    #[test]
    fn inside_mesh_is_unchanged() {
        let m = Rect {
            center: Vec3::new(1.0, 1.0, 1.0),
            half_u: Vec3::new(0.5, 0.0, 0.0),
            half_v: Vec3::new(0.0, 0.5, 0.0),
        }
        .to_mesh();
        assert_eq!(crop_scene(&m, Vec3::zeros(), CROP).unwrap(), m);
    }

    #[test]
    fn spanning_plane_is_clipped_to_box_face() {
        // plane y = 1 much larger than the box
        let m = Rect {
            center: Vec3::new(1.0, 1.0, 1.0),
            half_u: Vec3::new(10.0, 0.0, 0.0),
            half_v: Vec3::new(0.0, 0.0, 10.0),
        }
        .to_mesh();
        let c = crop_scene(&m, Vec3::zeros(), CROP).unwrap();
        assert!((c.area() - 12.0).abs() < 1e-9);
        let (lo, hi) = Aabb::enclosing(c.vertices.iter()).unwrap();
        assert!((lo - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        assert!((hi - Vec3::new(3.0, 1.0, 4.0)).norm() < 1e-12);
    }

    #[test]
    fn disjoint_box_errors() {
        let m = Rect {
            center: Vec3::new(10.0, 10.0, 10.0),
            half_u: Vec3::new(0.5, 0.0, 0.0),
            half_v: Vec3::new(0.0, 0.5, 0.0),
        }
        .to_mesh();
        assert!(matches!(
            crop_scene(&m, Vec3::zeros(), CROP),
            Err(Error::EmptyIntersection)
        ));
    }

    #[test]
    fn clipped_area_matches_room_section() {
        use crate::synthgen::{generate_room, RoomSpec};
        let spec = RoomSpec {
            seed: 1,
            footprint: (4.0, 4.0),
            wall_height: 3.0,
            clutter_count: 0,
        };
        let m = generate_room(&spec);
        let c = crop_scene(&m, Vec3::new(-0.2, -0.2, -0.2), CROP).unwrap();
        // floor and ceiling 2.8², walls x=0 and y=0: 2.8 × 3
        let expect = 2.0 * 2.8 * 2.8 + 2.0 * 2.8 * 3.0;
        assert!((c.area() - expect).abs() < 1e-9, "{}", c.area());
    }
}
