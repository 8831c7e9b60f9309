use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3};

/// Observed `(point, density)` pairs of one density field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DensitySampleSet {
    pub points: Vec<Vec3>,
    pub densities: Vec<f64>,
}

impl DensitySampleSet {
    pub fn new(points: Vec<Vec3>, densities: Vec<f64>, sigma_max: f64) -> Result<Self> {
        if points.len() != densities.len() {
            return Err(Error::Mismatch(format!(
                "{} points but {} densities",
                points.len(),
                densities.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(format!("sample {i} is not finite")));
        }
        if let Some(i) = densities.iter().position(|d| !(*d >= 0.0 && *d <= sigma_max)) {
            return Err(Error::InvalidInput(format!(
                "density {} of sample {i} outside [0, {sigma_max}]",
                densities[i]
            )));
        }
        Ok(Self { points, densities })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Appends every point of `cloud` with the same `density`.
    pub fn push_cloud(&mut self, cloud: &PointCloud, density: f64) {
        self.points.extend_from_slice(&cloud.points);
        self.densities
            .extend(std::iter::repeat(density).take(cloud.len()));
    }

    pub fn from_clouds(parts: &[(&PointCloud, f64)]) -> Self {
        let mut s = Self::default();
        for (c, d) in parts {
            s.push_cloud(c, *d);
        }
        s
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec3, f64)> {
        self.points.iter().zip(self.densities.iter().copied())
    }
}
