//! Geometry primitives shared by every stage of the pipeline.

mod aabb;
mod camera;
mod cloud;
mod grid;
pub mod marching_cubes;
mod mesh;
pub mod ply;
mod pose;
mod rect;
mod voxel;

pub use aabb::Aabb;
pub use camera::{pixel_to_ray, CameraIntrinsics, Ray};
pub use cloud::{transform_cloud, PointCloud};
pub use grid::{trilinear_weights, DensityGrid, TrilinearWeights};
pub use marching_cubes::marching_cubes;
pub use mesh::TriMesh;
pub use pose::PoseSE3;
pub use rect::Rect;
pub use voxel::{voxelize, VoxelOccupancy};

/// World-frame point or direction, meters.
pub type Vec3 = nalgebra::Vector3<f64>;

pub(crate) fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}
