use serde::{Deserialize, Serialize};

use super::{Aabb, Ray, TriMesh, Vec3};

/// Planar rectangle `center + a·half_u + b·half_v`, `a, b ∈ [-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub center: Vec3,
    pub half_u: Vec3,
    pub half_v: Vec3,
}

impl Rect {
    pub fn normal(&self) -> Vec3 {
        self.half_u.cross(&self.half_v).normalize()
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_u.cross(&self.half_v).norm()
    }

    pub fn corners(&self) -> [Vec3; 4] {
        let (c, u, v) = (self.center, self.half_u, self.half_v);
        [c - u - v, c + u - v, c + u + v, c - u + v]
    }

    pub fn to_mesh(&self) -> TriMesh {
        TriMesh {
            vertices: self.corners().to_vec(),
            faces: vec![[0, 1, 2], [0, 2, 3]],
        }
    }

    /// In-plane coordinates `(a, b)` of `p` projected onto the rectangle.
    pub fn local(&self, p: &Vec3) -> (f64, f64) {
        let d = p - self.center;
        (
            d.dot(&self.half_u) / self.half_u.norm_squared(),
            d.dot(&self.half_v) / self.half_v.norm_squared(),
        )
    }

    pub fn plane_distance(&self, p: &Vec3) -> f64 {
        (p - self.center).dot(&self.normal())
    }

    pub fn contains_projection(&self, p: &Vec3, tol: f64) -> bool {
        let (a, b) = self.local(p);
        let (tu, tv) = (tol / self.half_u.norm(), tol / self.half_v.norm());
        a.abs() <= 1.0 + tu && b.abs() <= 1.0 + tv
    }

    /// Ray parameter of the hit, if the ray crosses the rectangle at `t > 0`.
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        let n = self.normal();
        let denom = ray.direction.dot(&n);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.center - ray.origin).dot(&n) / denom;
        if !(t > 1e-9) {
            return None;
        }
        let (a, b) = self.local(&ray.at(t));
        (a.abs() <= 1.0 && b.abs() <= 1.0).then_some(t)
    }

    /// Clips an axis-aligned rectangle to `bounds`; `None` when nothing
    /// with positive area remains. Rectangles whose edges are not axis
    /// aligned are returned unchanged when fully inside and dropped
    /// otherwise.
    pub fn clip_axis_aligned(&self, bounds: &Aabb) -> Option<Rect> {
        let corners = self.corners();
        let (mut lo, mut hi) = Aabb::enclosing(corners.iter())?;
        let axis_aligned = [self.half_u, self.half_v]
            .iter()
            .all(|v| v.iter().filter(|c| c.abs() > 1e-12).count() == 1);
        if !axis_aligned {
            return corners.iter().all(|c| bounds.contains(c)).then_some(*self);
        }
        for a in 0..3 {
            lo[a] = lo[a].max(bounds.min[a]);
            hi[a] = hi[a].min(bounds.max[a]);
            if lo[a] > hi[a] {
                return None;
            }
        }
        let center = (lo + hi) * 0.5;
        let half = (hi - lo) * 0.5;
        let pick = |dir: &Vec3| {
            let a = dir.iamax();
            let mut v = Vec3::zeros();
            v[a] = half[a] * dir[a].signum();
            v
        };
        let (u, v) = (pick(&self.half_u), pick(&self.half_v));
        if u.norm() < 1e-9 || v.norm() < 1e-9 {
            return None;
        }
        Some(Rect {
            center,
            half_u: u,
            half_v: v,
        })
    }

    pub fn translated(&self, by: &Vec3) -> Rect {
        Rect {
            center: self.center + by,
            ..*self
        }
    }
}
