use std::io::{Read, Write};
use std::path::Path;

use super::{Aabb, Vec3};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VGRD";
const VERSION: u8 = 1;

/// Dense, vertex-centered scalar grid. Node `(i, j, k)` sits at
/// `min + (i/(nx-1), j/(ny-1), k/(nz-1)) ⊙ (max - min)`; values are stored
/// x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    dims: [usize; 3],
    bounds: Aabb,
    values: Vec<f64>,
}

/// The eight `(flat index, weight)` pairs of a trilinear lookup.
pub type TrilinearWeights = [(usize, f64); 8];

impl DensityGrid {
    pub fn new(dims: [usize; 3], bounds: Aabb, values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput(format!("grid dims must be positive, got {dims:?}")));
        }
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return Err(Error::Mismatch(format!(
                "grid {dims:?} needs {n} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "grid value {i} = {} is not a finite non-negative density",
                values[i]
            )));
        }
        Ok(Self {
            dims,
            bounds,
            values,
        })
    }

    pub fn filled(dims: [usize; 3], bounds: Aabb, value: f64) -> Result<Self> {
        Self::new(dims, bounds, vec![value; dims.iter().product()])
    }

    /// Evaluates `f` at every node position.
    pub fn from_fn(dims: [usize; 3], bounds: Aabb, mut f: impl FnMut(Vec3) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(f(node_position(dims, &bounds, [i, j, k])));
                }
            }
        }
        Self::new(dims, bounds, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        node_position(self.dims, &self.bounds, [i, j, k])
    }

    /// Node spacing per axis (zero on singleton axes).
    pub fn cell_size(&self) -> Vec3 {
        let s = self.bounds.size();
        Vec3::from_fn(|a, _| {
            if self.dims[a] > 1 {
                s[a] / (self.dims[a] - 1) as f64
            } else {
                0.0
            }
        })
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Trilinear interpolation weights at `p`. Points outside the box are
    /// clamped to the boundary.
    pub fn trilinear_weights(&self, p: &Vec3) -> TrilinearWeights {
        trilinear_weights(self.dims, &self.bounds, p)
    }

    pub fn trilinear_sample(&self, p: &Vec3) -> f64 {
        self.trilinear_weights(p)
            .iter()
            .map(|&(idx, w)| w * self.values[idx])
            .sum()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(4 + 1 + 12 + 48 + 4 * self.values.len());
        buf.extend_from_slice(MAGIC);
        buf.push(VERSION);
        for d in self.dims {
            let d = u32::try_from(d).map_err(|_| Error::Format("grid dim exceeds u32".into()))?;
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for c in self.bounds.min.iter().chain(self.bounds.max.iter()) {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::parse(path.display().to_string(), m),
            other => other,
        })
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 65 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing VGRD header".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!("unsupported grid version {}", bytes[4])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let dims = [u32_at(5), u32_at(9), u32_at(13)];
        let min = Vec3::new(f64_at(17), f64_at(25), f64_at(33));
        let max = Vec3::new(f64_at(41), f64_at(49), f64_at(57));
        let n: usize = dims.iter().product();
        let payload = &bytes[65..];
        if payload.len() != 4 * n {
            return Err(Error::Format(format!(
                "expected {} value bytes for dims {dims:?}, found {}",
                4 * n,
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Self::new(dims, Aabb::new(min, max)?, values)
    }
}

fn node_position(dims: [usize; 3], bounds: &Aabb, ijk: [usize; 3]) -> Vec3 {
    let size = bounds.size();
    Vec3::from_fn(|a, _| {
        let f = if dims[a] > 1 {
            ijk[a] as f64 / (dims[a] - 1) as f64
        } else {
            0.0
        };
        bounds.min[a] + f * size[a]
    })
}

/// Lower node index and fractional offset along one axis, clamped.
fn axis_cell(n: usize, lo: f64, hi: f64, x: f64) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let mut g = ((x - lo) / (hi - lo) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
    // Round-off from node_position must not leak a neighbour into a node sample.
    if (g - g.round()).abs() < 1e-10 {
        g = g.round();
    }
    let i0 = (g.floor() as usize).min(n - 2);
    (i0, i0 + 1, g - i0 as f64)
}

/// Trilinear weights of `p` in a grid of `dims` nodes spanning `bounds`,
/// clamped at the box.
pub fn trilinear_weights(dims: [usize; 3], bounds: &Aabb, p: &Vec3) -> TrilinearWeights {
    let (x0, x1, fx) = axis_cell(dims[0], bounds.min.x, bounds.max.x, p.x);
    let (y0, y1, fy) = axis_cell(dims[1], bounds.min.y, bounds.max.y, p.y);
    let (z0, z1, fz) = axis_cell(dims[2], bounds.min.z, bounds.max.z, p.z);
    let idx = |i: usize, j: usize, k: usize| i + dims[0] * (j + dims[1] * k);
    let (gx, gy, gz) = (1.0 - fx, 1.0 - fy, 1.0 - fz);
    [
        (idx(x0, y0, z0), gx * gy * gz),
        (idx(x1, y0, z0), fx * gy * gz),
        (idx(x0, y1, z0), gx * fy * gz),
        (idx(x1, y1, z0), fx * fy * gz),
        (idx(x0, y0, z1), gx * gy * fz),
        (idx(x1, y0, z1), fx * gy * fz),
        (idx(x0, y1, z1), gx * fy * fz),
        (idx(x1, y1, z1), fx * fy * fz),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn unit_box() -> Aabb {
        Aabb::new(Vec3::zeros(), Vec3::repeat(1.0)).unwrap()
    }

    fn random_grid(rng: &mut impl Rng, n: usize) -> DensityGrid {
        let vals = (0..n * n * n).map(|_| rng.random_range(0.0..100.0)).collect();
        DensityGrid::new([n, n, n], unit_box(), vals).unwrap()
    }

    /// Independent 8-corner blend written directly from the definition.
    fn brute_force(grid: &DensityGrid, p: &Vec3) -> f64 {
        let [nx, ny, nz] = grid.dims();
        let b = grid.bounds();
        let g: Vec<f64> = (0..3)
            .map(|a| {
                let n = [nx, ny, nz][a];
                ((p[a] - b.min[a]) / (b.max[a] - b.min[a]) * (n - 1) as f64)
                    .clamp(0.0, (n - 1) as f64)
            })
            .collect();
        let mut total = 0.0;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let w = |c: usize, x: f64| (1.0 - (x - c as f64).abs()).max(0.0);
                    total += w(i, g[0]) * w(j, g[1]) * w(k, g[2]) * grid.get(i, j, k);
                }
            }
        }
        total
    }

    #[test]
    fn exact_at_nodes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let g = random_grid(&mut rng, 4);
        for k in 0..4 {
            for j in 0..4 {
                for i in 0..4 {
                    assert_eq!(g.trilinear_sample(&g.node_position(i, j, k)), g.get(i, j, k));
                }
            }
        }
    }

    #[test]
    fn midpoint_of_two_nodes() {
        let mut vals = vec![0.0; 8];
        vals[1] = 100.0;
        vals[3] = 100.0;
        vals[5] = 100.0;
        vals[7] = 100.0;
        let g = DensityGrid::new([2, 2, 2], unit_box(), vals).unwrap();
        assert_eq!(g.trilinear_sample(&Vec3::new(0.5, 0.0, 0.0)), 50.0);
    }

    #[test]
    fn clamps_outside_the_box() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let g = random_grid(&mut rng, 3);
        assert_eq!(g.trilinear_sample(&Vec3::new(-5.0, -1.0, -0.1)), g.get(0, 0, 0));
        assert_eq!(g.trilinear_sample(&Vec3::new(9.0, 1.5, 1.0)), g.get(2, 2, 2));
    }

    #[test]
    fn matches_brute_force_on_random_4_cubed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let g = random_grid(&mut rng, 4);
            let p = Vec3::from_fn(|_, _| rng.random_range(0.0..1.0));
            assert!((g.trilinear_sample(&p) - brute_force(&g, &p)).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_values_and_dims() {
        assert!(DensityGrid::new([2, 2, 2], unit_box(), vec![0.0; 7]).is_err());
        assert!(DensityGrid::new([0, 2, 2], unit_box(), vec![]).is_err());
        assert!(DensityGrid::new([1, 1, 1], unit_box(), vec![-1.0]).is_err());
        assert!(DensityGrid::new([1, 1, 1], unit_box(), vec![f64::NAN]).is_err());
    }

    #[test]
    fn vgrd_round_trip_and_layout() {
        let b = Aabb::new(Vec3::new(-1.0, 0.0, 2.0), Vec3::new(1.0, 3.0, 4.0)).unwrap();
        let vals: Vec<f64> = (0..24).map(|v| v as f64 * 0.5).collect();
        let g = DensityGrid::new([2, 3, 4], b, vals).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.vgrd");
        g.write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..5], b"VGRD\x01");
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[13..17].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(bytes[17..25].try_into().unwrap()), -1.0);
        assert_eq!(bytes.len(), 65 + 24 * 4);
        // second value in x-fastest order is node (1,0,0)
        assert_eq!(f32::from_le_bytes(bytes[69..73].try_into().unwrap()), 0.5);
        assert_eq!(DensityGrid::read(&path).unwrap(), g);
    }

    #[test]
    fn vgrd_rejects_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vgrd");
        std::fs::write(&path, b"VGRD\x01\x02").unwrap();
        assert!(DensityGrid::read(&path).is_err());
    }

    proptest! {
        #[test]
        fn bounded_by_surrounding_nodes(seed in 0u64..10_000, px in 0.0f64..1.0, py in 0.0f64..1.0, pz in 0.0f64..1.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = random_grid(&mut rng, 5);
            let p = Vec3::new(px, py, pz);
            let w = g.trilinear_weights(&p);
            let lo = w.iter().map(|&(i, _)| g.values()[i]).fold(f64::INFINITY, f64::min);
            let hi = w.iter().map(|&(i, _)| g.values()[i]).fold(f64::NEG_INFINITY, f64::max);
            let s = g.trilinear_sample(&p);
            prop_assert!(s >= lo - 1e-9 && s <= hi + 1e-9);
        }

        #[test]
        fn continuous(seed in 0u64..10_000, px in 0.0f64..1.0, py in 0.0f64..1.0, pz in 0.0f64..1.0,
                      d in prop::array::uniform3(-1.0f64..1.0)) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = random_grid(&mut rng, 5);
            let p = Vec3::new(px, py, pz);
            let dv = Vec3::from(d);
            prop_assume!(dv.norm() > 1e-3);
            let q = p + dv.normalize() * 1e-6;
            prop_assert!((g.trilinear_sample(&p) - g.trilinear_sample(&q)).abs() < 1e-3 * 100.0);
        }
    }
}
