use std::collections::HashMap;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geom::{Aabb, PointCloud, TriMesh, Vec3};
use crate::rng;

/// Area-weighted uniform samples on `mesh`, with the face each came from.
pub fn sample_surface_with_faces(mesh: &TriMesh, n: usize, seed: u64) -> Result<(PointCloud, Vec<usize>)> {
    if mesh.faces.is_empty() {
        return Err(Error::InvalidInput("cannot sample an empty mesh".into()));
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidInput("mesh has zero area".into()));
    }
    let mut rng = rng::substream(seed, "synthgen.surface", 0);
    let mut points = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random::<f64>() * total;
        let f = cdf.partition_point(|&c| c <= x).min(cdf.len() - 1);
        let [a, b, c] = mesh.triangle(f);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        points.push(a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2));
        faces.push(f);
    }
    Ok((PointCloud::new(points), faces))
}

pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud> {
    sample_surface_with_faces(mesh, n, seed).map(|(c, _)| c)
}

struct PointHash<'a> {
    cell: f64,
    points: &'a [Vec3],
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> PointHash<'a> {
    fn new(points: &'a [Vec3], cell: f64) -> Self {
        let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        Self { cell, points, buckets }
    }

    fn key(p: &Vec3, cell: f64) -> [i64; 3] {
        [0, 1, 2].map(|a| (p[a] / cell).floor() as i64)
    }

    fn any_within(&self, p: &Vec3, r: f64) -> bool {
        let k = Self::key(p, self.cell);
        let r2 = r * r;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(b) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if b.iter().any(|&i| (self.points[i as usize] - p).norm_squared() < r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// `n` points uniform in `bounds`, each at least `clearance` from every
/// point of `surfaces`.
pub fn sample_free_space(
    bounds: &Aabb,
    n: usize,
    surfaces: &PointCloud,
    clearance: f64,
    seed: u64,
) -> Result<PointCloud> {
    if !(clearance > 0.0) || !clearance.is_finite() {
        return Err(Error::InvalidInput(format!("clearance must be positive, got {clearance}")));
    }
    let hash = PointHash::new(&surfaces.points, clearance);
    let mut rng = rng::substream(seed, "synthgen.free", 0);
    let size = bounds.size();
    let max_draws = n.saturating_mul(100);
    let mut out = Vec::with_capacity(n);
    let mut draws = 0usize;
    while out.len() < n {
        if draws >= max_draws {
            return Err(Error::SamplingFailed(format!(
                "only {} of {n} free-space samples after {draws} draws; bounds too crowded for clearance {clearance}",
                out.len()
            )));
        }
        draws += 1;
        let p = bounds.min + Vec3::new(
            rng.random::<f64>() * size.x,
            rng.random::<f64>() * size.y,
            rng.random::<f64>() * size.z,
        );
        if !hash.any_within(&p, clearance) {
            out.push(p);
        }
    }
    Ok(PointCloud::new(out))
}
