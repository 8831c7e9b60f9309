//! Marching cubes with linear edge interpolation.
//!
//! The per-configuration triangulation table is derived at first use by
//! tracing iso-contours around the six cube faces instead of being
//! hard-coded. Ambiguous faces always separate the inside corners; the rule
//! depends only on the face's own corner signs, so neighbouring cells agree
//! on shared faces and the output is crack-free.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::{DensityGrid, TriMesh, Vec3};

/// Corner `c` of a cell sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// The 12 cell edges as `(low corner, axis)`.
fn edges() -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(12);
    for axis in 0..3 {
        for c in 0..8 {
            if c & (1 << axis) == 0 {
                out.push((c, axis));
            }
        }
    }
    out
}

fn edge_between(a: usize, b: usize) -> usize {
    let (lo, hi) = (a.min(b), a.max(b));
    let axis = (hi ^ lo).trailing_zeros() as usize;
    edges()
        .iter()
        .position(|&e| e == (lo, axis))
        .expect("corners must share an edge")
}

/// Faces as four corners, counter-clockwise seen from outside the cell.
fn faces() -> Vec<[usize; 4]> {
    let pos = |c: usize| {
        let o = corner_offset(c);
        Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64)
    };
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        for side in 0..2 {
            let mut corners: Vec<usize> =
                (0..8).filter(|&c| (c >> axis) & 1 == side).collect();
            let normal = Vec3::from_fn(|a, _| {
                if a == axis {
                    if side == 1 { 1.0 } else { -1.0 }
                } else {
                    0.0
                }
            });
            let center = corners.iter().map(|&c| pos(c)).sum::<Vec3>() / 4.0;
            let (u, v) = {
                let u = Vec3::from_fn(|a, _| if a == (axis + 1) % 3 { 1.0 } else { 0.0 });
                (u, normal.cross(&u))
            };
            corners.sort_by(|&a, &b| {
                let ang = |c: usize| {
                    let d = pos(c) - center;
                    d.dot(&v).atan2(d.dot(&u))
                };
                ang(a).total_cmp(&ang(b))
            });
            out.push([corners[0], corners[1], corners[2], corners[3]]);
        }
    }
    out
}

/// For each of the 256 inside/outside corner patterns, closed loops of
/// crossed edges, oriented so that fanned triangles face away from the
/// inside region.
fn case_table() -> &'static [Vec<Vec<usize>>] {
    static TABLE: OnceLock<Vec<Vec<Vec<usize>>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let faces = faces();
        (0..256usize)
            .map(|case| {
                let inside = |c: usize| case & (1 << c) != 0;
                let mut next = [usize::MAX; 12];
                for f in &faces {
                    for k in 0..4 {
                        let (a, b) = (f[k], f[(k + 1) % 4]);
                        if inside(a) || !inside(b) {
                            continue;
                        }
                        // entering crossing: walk forward to the first leaving one
                        let mut m = (k + 1) % 4;
                        while !(inside(f[m]) && !inside(f[(m + 1) % 4])) {
                            m = (m + 1) % 4;
                        }
                        next[edge_between(a, b)] = edge_between(f[m], f[(m + 1) % 4]);
                    }
                }
                let mut loops = Vec::new();
                let mut seen = [false; 12];
                for start in 0..12 {
                    if next[start] == usize::MAX || seen[start] {
                        continue;
                    }
                    let mut lp = Vec::new();
                    let mut e = start;
                    while !seen[e] {
                        seen[e] = true;
                        lp.push(e);
                        e = next[e];
                    }
                    loops.push(lp);
                }
                loops
            })
            .collect()
    })
}

/// Extracts the `iso` level set of `grid` as a triangle mesh in world
/// coordinates. Nodes with value `>= iso` are inside; triangles wind
/// counter-clockwise seen from outside. An empty mesh is returned when the
/// field never crosses `iso`.
pub fn marching_cubes(grid: &DensityGrid, iso: f64) -> TriMesh {
    let [nx, ny, nz] = grid.dims();
    let mut mesh = TriMesh::default();
    if nx < 2 || ny < 2 || nz < 2 {
        return mesh;
    }
    let table = case_table();
    let edge_list = edges();
    let vals = grid.values();
    let mut vertex_of: HashMap<(usize, usize), usize> = HashMap::new();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let node = |c: usize| {
                    let o = corner_offset(c);
                    grid.index(i + o[0], j + o[1], k + o[2])
                };
                let mut case = 0usize;
                for c in 0..8 {
                    if vals[node(c)] >= iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let mut edge_vertex = |e: usize, mesh: &mut TriMesh| -> usize {
                    let (c, axis) = edge_list[e];
                    let a = node(c);
                    let b = node(c | (1 << axis));
                    *vertex_of.entry((a, axis)).or_insert_with(|| {
                        let oa = corner_offset(c);
                        let mut ob = oa;
                        ob[axis] = 1;
                        let pa = grid.node_position(i + oa[0], j + oa[1], k + oa[2]);
                        let pb = grid.node_position(i + ob[0], j + ob[1], k + ob[2]);
                        let (va, vb) = (vals[a], vals[b]);
                        let t = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
                        mesh.vertices.push(pa + (pb - pa) * t);
                        mesh.vertices.len() - 1
                    })
                };
                for lp in &table[case] {
                    let ids: Vec<usize> = lp.iter().map(|&e| edge_vertex(e, &mut mesh)).collect();
                    for t in 1..ids.len() - 1 {
                        mesh.faces.push([ids[0], ids[t], ids[t + 1]]);
                    }
                }
            }
        }
    }
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Aabb;
    use std::f64::consts::PI;

    #[test]
    fn every_case_forms_closed_loops_of_length_three_or_more() {
        for (case, loops) in case_table().iter().enumerate() {
            let crossings = (0..12)
                .filter(|&e| {
                    let (c, axis) = edges()[e];
                    ((case >> c) & 1) != ((case >> (c | (1 << axis))) & 1)
                })
                .count();
            assert_eq!(loops.iter().map(Vec::len).sum::<usize>(), crossings, "case {case}");
            assert!(loops.iter().all(|l| l.len() >= 3));
        }
    }

    #[test]
    fn constant_fields_are_empty() {
        let b = Aabb::new(Vec3::zeros(), Vec3::repeat(1.0)).unwrap();
        assert!(marching_cubes(&DensityGrid::filled([5, 5, 5], b, 0.0).unwrap(), 85.0).is_empty());
        assert!(marching_cubes(&DensityGrid::filled([5, 5, 5], b, 100.0).unwrap(), 85.0).is_empty());
    }

    #[test]
    fn single_hot_node_gives_closed_octahedron() {
        let b = Aabb::new(Vec3::zeros(), Vec3::repeat(2.0)).unwrap();
        let g = DensityGrid::from_fn([3, 3, 3], b, |p| if p == Vec3::repeat(1.0) { 100.0 } else { 0.0 }).unwrap();
        let m = marching_cubes(&g, 50.0);
        m.validate().unwrap();
        assert_eq!(m.faces.len(), 8);
        assert_eq!(m.vertices.len(), 6);
        assert!(m.is_closed());
        assert!(m.signed_volume() > 0.0);
        // vertices halfway to the neighbours
        for v in &m.vertices {
            assert!(((v - Vec3::repeat(1.0)).norm() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_area_and_orientation() {
        let b = Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        let r = 0.5;
        let h = 2.0 / 63.0;
        let g = DensityGrid::from_fn([64, 64, 64], b, |p| {
            100.0 * (0.5 + (r - p.norm()) / (2.0 * h)).clamp(0.0, 1.0)
        })
        .unwrap();
        let m = marching_cubes(&g, 50.0);
        m.validate().unwrap();
        assert!(m.is_closed());
        let expected = 4.0 * PI * r * r;
        assert!((m.area() - expected).abs() / expected < 0.05, "area {}", m.area());
        assert!((m.signed_volume() - 4.0 / 3.0 * PI * r.powi(3)).abs() < 0.02);
    }
}
