use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, Rect, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlassKind {
    FullPane,
    HalfPane,
    Window,
}

impl GlassKind {
    pub const ALL: [GlassKind; 3] = [GlassKind::FullPane, GlassKind::HalfPane, GlassKind::Window];
}

/// Planar glass rectangle embedded in a vertical wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlassSpec {
    pub kind: GlassKind,
    pub center: Vec3,
    pub width: f64,
    pub height: f64,
    pub wall_normal: Vec3,
}

const PLANE_TOL: f64 = 1e-6;

impl GlassSpec {
    /// Horizontal in-plane direction.
    pub fn tangent(&self) -> Vec3 {
        Vec3::z().cross(&self.wall_normal).normalize()
    }

    pub fn rect(&self) -> Rect {
        Rect {
            center: self.center,
            half_u: self.tangent() * (0.5 * self.width),
            half_v: Vec3::z() * (0.5 * self.height),
        }
    }

    pub fn translated(&self, by: &Vec3) -> GlassSpec {
        GlassSpec {
            center: self.center + by,
            ..*self
        }
    }

    /// True when `p` lies within `margin` of the glass plane and inside its
    /// in-plane extent.
    pub fn captures(&self, p: &Vec3, margin: f64) -> bool {
        let d = p - self.center;
        d.dot(&self.wall_normal).abs() <= margin
            && d.dot(&self.tangent()).abs() <= 0.5 * self.width
            && d.z.abs() <= 0.5 * self.height
    }

    fn lies_on(&self, wall: &Rect) -> bool {
        let n = wall.normal();
        n.dot(&self.wall_normal).abs() > 1.0 - PLANE_TOL
            && wall.plane_distance(&self.center).abs() <= PLANE_TOL
            && self
                .rect()
                .corners()
                .iter()
                .all(|c| wall.contains_projection(c, PLANE_TOL))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.wall_normal;
        if !(self.width > 0.0 && self.height > 0.0) || !(self.width.is_finite() && self.height.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "glass size {} × {} must be positive",
                self.width, self.height
            )));
        }
        if !((n.norm() - 1.0).abs() < 1e-6 && n.z.abs() < 1e-6) {
            return Err(Error::InvalidInput(format!(
                "glass normal {:?} must be a horizontal unit vector",
                n.as_slice()
            )));
        }
        Ok(())
    }
}

/// Splits `cloud` into opaque points `X_s` and cutout points `X_t`.
pub fn carve_glass(
    cloud: &PointCloud,
    specs: &[GlassSpec],
    walls: &[Rect],
    margin: f64,
) -> Result<(PointCloud, PointCloud)> {
    if !(margin >= 0.0) {
        return Err(Error::InvalidInput(format!("carve margin {margin} is negative")));
    }
    for (i, s) in specs.iter().enumerate() {
        s.validate()?;
        if !walls.iter().any(|w| s.lies_on(w)) {
            return Err(Error::InvalidInput(format!(
                "glass {i} at {:?} does not lie on any wall",
                s.center.as_slice()
            )));
        }
    }
    let (mut xs, mut xt) = (Vec::new(), Vec::new());
    for p in &cloud.points {
        if specs.iter().any(|s| s.captures(p, margin)) {
            xt.push(*p);
        } else {
            xs.push(*p);
        }
    }
    Ok((PointCloud::new(xs), PointCloud::new(xt)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::sample_surface;

    // wall x = 0, y ∈ [0, 3], z ∈ [0, 4], normal +x
    fn wall() -> Rect {
        Rect {
            center: Vec3::new(0.0, 1.5, 2.0),
            half_u: Vec3::new(0.0, 1.5, 0.0),
            half_v: Vec3::new(0.0, 0.0, 2.0),
        }
    }

    fn cloud(n: usize) -> PointCloud {
        sample_surface(&wall().to_mesh(), n, 17).unwrap()
    }

    #[test]
    fn no_specs_keeps_everything() {
        let c = cloud(100);
        let (xs, xt) = carve_glass(&c, &[], &[wall()], 0.05).unwrap();
        assert_eq!(xs, c);
        assert!(xt.is_empty());
    }

    #[test]
    fn full_pane_takes_the_whole_wall() {
        let c = cloud(10_000);
        let g = GlassSpec {
            kind: GlassKind::FullPane,
            center: wall().center,
            width: 3.0,
            height: 4.0,
            wall_normal: Vec3::x(),
        };
        let (xs, xt) = carve_glass(&c, &[g], &[wall()], 0.05).unwrap();
        assert!(xs.points.iter().all(|p| p.x.abs() >= 0.05));
        assert_eq!(xt.len(), 10_000);
    }

    #[test]
    fn window_fraction_matches_area_ratio() {
        let c = cloud(10_000);
        let g = GlassSpec {
            kind: GlassKind::Window,
            center: wall().center,
            width: 1.0,
            height: 1.0,
            wall_normal: Vec3::x(),
        };
        let (xs, xt) = carve_glass(&c, &[g], &[wall()], 0.05).unwrap();
        assert_eq!(xs.len() + xt.len(), 10_000);
        let frac = xt.len() as f64 / 10_000.0;
        assert!((frac - 1.0 / 12.0).abs() <= 0.2 / 12.0, "{frac}");
        // brute-force membership
        for p in &xt.points {
            assert!((p.y - 1.5).abs() <= 0.5 && (p.z - 2.0).abs() <= 0.5);
        }
        for p in &xs.points {
            assert!(!((p.y - 1.5).abs() <= 0.5 && (p.z - 2.0).abs() <= 0.5));
        }
    }

    #[test]
    fn off_wall_spec_errors() {
        let c = cloud(10);
        let mut g = GlassSpec {
            kind: GlassKind::Window,
            center: Vec3::new(0.5, 1.5, 2.0),
            width: 1.0,
            height: 1.0,
            wall_normal: Vec3::x(),
        };
        assert!(carve_glass(&c, &[g], &[wall()], 0.05).is_err());
        // on the plane but sticking out past the wall edge
        g.center = Vec3::new(0.0, 2.8, 2.0);
        assert!(carve_glass(&c, &[g], &[wall()], 0.05).is_err());
        // wrong orientation
        g.center = wall().center;
        g.wall_normal = Vec3::y();
        assert!(carve_glass(&c, &[g], &[wall()], 0.05).is_err());
    }
}
