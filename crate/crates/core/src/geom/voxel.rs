use super::{Aabb, PointCloud, Vec3};
use crate::error::{Error, Result};

/// Cubic boolean occupancy grid over a box; cell-centered, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelOccupancy {
    n: usize,
    bounds: Aabb,
    bits: Vec<bool>,
}

impl VoxelOccupancy {
    pub fn empty(n: usize, bounds: Aabb) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("voxel resolution must be positive".into()));
        }
        Ok(Self {
            n,
            bounds,
            bits: vec![false; n * n * n],
        })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_set(&self, i: usize, j: usize, k: usize) -> bool {
        self.bits[i + self.n * (j + self.n * k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize) {
        self.bits[i + self.n * (j + self.n * k)] = true;
    }

    /// Voxel containing `p`, or `None` outside the box. Points on an
    /// internal face go to the higher index; points on the far face of the
    /// box belong to the last voxel.
    pub fn voxel_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        if !self.bounds.contains(p) {
            return None;
        }
        let size = self.bounds.size();
        let mut ijk = [0; 3];
        for a in 0..3 {
            let g = ((p[a] - self.bounds.min[a]) / size[a] * self.n as f64).floor();
            ijk[a] = (g.max(0.0) as usize).min(self.n - 1);
        }
        Some(ijk)
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let size = self.bounds.size() / self.n as f64;
        self.bounds.min + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5).component_mul(&size)
    }

    /// Centers of all occupied voxels.
    pub fn centers(&self) -> PointCloud {
        let n = self.n;
        let pts = (0..self.bits.len())
            .filter(|&i| self.bits[i])
            .map(|i| self.voxel_center(i % n, (i / n) % n, i / (n * n)))
            .collect();
        PointCloud::new(pts)
    }

    pub fn same_frame(&self, other: &VoxelOccupancy) -> bool {
        self.n == other.n && self.bounds == other.bounds
    }
}

/// Marks every voxel that contains at least one point of `cloud`.
pub fn voxelize(cloud: &PointCloud, n: usize, bounds: Aabb) -> Result<VoxelOccupancy> {
    let mut occ = VoxelOccupancy::empty(n, bounds)?;
    for p in &cloud.points {
        if let Some([i, j, k]) = occ.voxel_of(p) {
            occ.set(i, j, k);
        }
    }
    Ok(occ)
}
