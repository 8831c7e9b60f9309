use std::path::Path;

use super::{ply, PoseSE3, Vec3};
use crate::error::{Error, Result};

/// Ordered point set with optional RGB colors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            colors: None,
        }
    }

    pub fn with_colors(points: Vec<Vec3>, colors: Vec<[u8; 3]>) -> Result<Self> {
        if colors.len() != points.len() {
            return Err(Error::Mismatch(format!(
                "{} colors for {} points",
                colors.len(),
                points.len()
            )));
        }
        Ok(Self {
            points,
            colors: Some(colors),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.points.iter().position(|p| !super::is_finite(p)) {
            return Err(Error::InvalidInput(format!("point {i} is not finite")));
        }
        if let Some(c) = &self.colors {
            if c.len() != self.points.len() {
                return Err(Error::Mismatch("color count differs from point count".into()));
            }
        }
        Ok(())
    }

    /// Appends `other`; colors are kept only if both sides carry them.
    pub fn extend(&mut self, other: &PointCloud) {
        self.colors = match (self.colors.take(), &other.colors) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, _) if self.points.is_empty() => other.colors.clone(),
            _ => None,
        };
        self.points.extend_from_slice(&other.points);
    }

    pub fn read_ply(path: impl AsRef<Path>) -> Result<Self> {
        let data = ply::read(path)?;
        Ok(data.cloud)
    }

    pub fn write_ply(&self, path: impl AsRef<Path>, format: ply::Format) -> Result<()> {
        ply::write_cloud(path, self, format, None)
    }
}

/// Rotates then translates every point; order is preserved.
pub fn transform_cloud(cloud: &PointCloud, pose: &PoseSE3) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| pose.transform_point(p)).collect(),
        colors: cloud.colors.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_and_translation() {
        let c = PointCloud::new(vec![Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0)]);
        assert_eq!(transform_cloud(&c, &PoseSE3::identity()), c);
        let moved = transform_cloud(
            &PointCloud::new(vec![Vec3::zeros()]),
            &PoseSE3::from_translation(Vec3::x()),
        );
        assert_eq!(moved.points, vec![Vec3::x()]);
    }

    #[test]
    fn quarter_turn_about_z() {
        let pose = PoseSE3::from_axis_angle(Vec3::z(), FRAC_PI_2, Vec3::zeros());
        let out = transform_cloud(&PointCloud::new(vec![Vec3::x()]), &pose);
        assert_abs_diff_eq!(out.points[0], Vec3::y(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn inverse_transform_round_trips(
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in -3.0f64..3.0,
            t in prop::array::uniform3(-10.0f64..10.0),
            pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 0..20),
        ) {
            prop_assume!(Vec3::from(axis).norm() > 1e-3);
            let pose = PoseSE3::from_axis_angle(Vec3::from(axis), angle, Vec3::from(t));
            let cloud = PointCloud::new(pts.into_iter().map(Vec3::from).collect());
            let back = transform_cloud(&transform_cloud(&cloud, &pose), &pose.inverse());
            for (a, b) in cloud.points.iter().zip(&back.points) {
                prop_assert!((a - b).amax() < 1e-9);
            }
        }
    }
}
