//! Benchmark fixtures shared by the criterion targets.

use vair_core::{Aabb, DensityGrid, PointCloud, Vec3};

/// Density field of a sphere shell: `σ_max` on the shell, falling off
/// linearly over `width`.
pub fn shell_field(n: usize, radius: f64, width: f64) -> DensityGrid {
    let b = Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)).expect("unit box");
    DensityGrid::from_fn([n; 3], b, |p| 100.0 * (1.0 - ((p.norm() - radius).abs() / width)).max(0.0))
        .expect("valid grid")
}

/// Deterministic cloud on a 3 m cube, from a cheap LCG.
pub fn lcg_cloud(n: usize, seed: u64) -> PointCloud {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 * 3.0
    };
    PointCloud::new((0..n).map(|_| Vec3::new(next(), next(), next())).collect())
}
