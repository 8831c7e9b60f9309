//! Reconstruction metrics: voxel IOU variants, Chamfer-ℓ1, and point
//! extraction from density fields.

use std::fmt;

use kiddo::{ImmutableKdTree, Manhattan};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{voxelize, Aabb, DensityGrid, PointCloud, TriMesh, Vec3, VoxelOccupancy};
use crate::rng;
use crate::synthgen::sample_surface;

/// Points drawn uniformly in the field's box whose trilinear density is at
/// least `threshold`. Stops after `n` hits or `1000·n` draws.
pub fn extract_points(field: &DensityGrid, threshold: f64, n: usize, seed: u64) -> Result<PointCloud> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidInput(format!("threshold must be positive, got {threshold}")));
    }
    if field.max_value() < threshold {
        log::warn!("field never reaches density {threshold}; nothing to extract");
        return Ok(PointCloud::default());
    }
    let b = *field.bounds();
    let size = b.size();
    let mut rng = rng::substream(seed, "eval.extract", 0);
    let budget = n.saturating_mul(1000);
    let mut out = Vec::with_capacity(n);
    let mut draws = 0;
    while out.len() < n && draws < budget {
        draws += 1;
        let p = b.min
            + Vec3::new(
                rng.random::<f64>() * size.x,
                rng.random::<f64>() * size.y,
                rng.random::<f64>() * size.z,
            );
        if field.trilinear_sample(&p) >= threshold {
            out.push(p);
        }
    }
    if out.is_empty() {
        log::warn!("no point above density {threshold} in {draws} draws");
    } else if out.len() < n {
        log::warn!("extracted {} of {n} points within the draw budget", out.len());
    }
    Ok(PointCloud::new(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouKind {
    /// `|Ŷ∩Y| / |Ŷ∪Y|`
    Unmasked,
    /// `|(Ŷ∩Y)∩Y| / |Ŷ∪Y|`, the masked formula taken literally.
    MaskedLiteral,
    /// `|Ŷ∩Y| / |Y|`: the prediction restricted to the ground-truth region.
    MaskedRecall,
}

/// Set counts of two occupancy grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub pred: usize,
    pub gt: usize,
    pub intersection: usize,
    pub union: usize,
}

pub fn overlap(pred: &VoxelOccupancy, gt: &VoxelOccupancy) -> Result<OverlapCounts> {
    if !pred.same_frame(gt) {
        return Err(Error::Mismatch("occupancy grids differ in resolution or bounds".into()));
    }
    let (mut i, mut u) = (0, 0);
    for (&a, &b) in pred.bits().iter().zip(gt.bits()) {
        i += usize::from(a && b);
        u += usize::from(a || b);
    }
    Ok(OverlapCounts {
        pred: pred.count(),
        gt: gt.count(),
        intersection: i,
        union: u,
    })
}

impl OverlapCounts {
    pub fn iou(&self, kind: IouKind) -> f64 {
        if self.union == 0 {
            log::debug!("both occupancy grids empty; IOU defined as 1");
            return 1.0;
        }
        match kind {
            // (Ŷ∩Y)∩Y = Ŷ∩Y, so both share a numerator
            IouKind::Unmasked | IouKind::MaskedLiteral => self.intersection as f64 / self.union as f64,
            IouKind::MaskedRecall => {
                if self.gt == 0 {
                    0.0
                } else {
                    self.intersection as f64 / self.gt as f64
                }
            }
        }
    }
}

pub fn iou(pred: &VoxelOccupancy, gt: &VoxelOccupancy, kind: IouKind) -> Result<f64> {
    Ok(overlap(pred, gt)?.iou(kind))
}

fn tree(cloud: &PointCloud) -> ImmutableKdTree<f64, 3> {
    let pts: Vec<[f64; 3]> = cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect();
    ImmutableKdTree::new_from_slice(&pts)
}

/// Mean L1 distance from each point of `from` to its nearest point in `to`.
fn directed_l1(from: &PointCloud, to: &ImmutableKdTree<f64, 3>) -> f64 {
    let d: Vec<f64> = from
        .points
        .par_iter()
        .map(|p| to.nearest_one::<Manhattan>(&[p.x, p.y, p.z]).distance)
        .collect();
    d.iter().sum::<f64>() / from.len() as f64
}

/// `½·mean_a min_b ‖a−b‖₁ + ½·mean_b min_a ‖a−b‖₁`
pub fn chamfer_l1(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("chamfer distance needs two non-empty clouds".into()));
    }
    Ok(0.5 * directed_l1(a, &tree(b)) + 0.5 * directed_l1(b, &tree(a)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub resolution: usize,
    /// Points sampled on a ground-truth mesh.
    pub gt_samples: usize,
    /// Padding of the default box, as a fraction of its largest extent.
    pub bounds_padding: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            gt_samples: 500_000,
            bounds_padding: 0.05,
            seed: 0,
        }
    }
}

pub enum GroundTruth<'a> {
    Mesh(&'a TriMesh),
    Cloud(&'a PointCloud),
}

impl GroundTruth<'_> {
    pub fn points(&self, cfg: &EvalConfig) -> Result<PointCloud> {
        match self {
            GroundTruth::Mesh(m) => sample_surface(m, cfg.gt_samples, rng::derive_seed(cfg.seed, "eval.gt", 0)),
            GroundTruth::Cloud(c) => Ok((*c).clone()),
        }
    }
}

/// The ground-truth bounding box padded on every side.
pub fn default_bounds(gt: &PointCloud, padding: f64) -> Result<Aabb> {
    Aabb::around_points(gt.points.iter(), padding)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `|Ŷ∩Y|/|Y|`, the masked IOU reported by default.
    pub iou_masked: f64,
    pub iou_masked_literal: f64,
    pub iou_unmasked: f64,
    /// Symmetric Chamfer-ℓ1 (half-weighted means); `None` when the
    /// prediction is empty.
    pub cd_l1: Option<f64>,
    pub cd_l1_x1000: Option<f64>,
    pub counts: OverlapCounts,
    pub resolution: usize,
    pub pred_points: usize,
    pub gt_points: usize,
    pub chamfer_convention: String,
}

pub const CHAMFER_CONVENTION: &str = "0.5*mean_a min_b |a-b|_1 + 0.5*mean_b min_a |a-b|_1";

/// Voxelizes prediction and ground truth in `bounds` and scores them.
pub fn evaluate(pred: &PointCloud, gt: GroundTruth<'_>, bounds: &Aabb, cfg: &EvalConfig) -> Result<MetricReport> {
    let gt = gt.points(cfg)?;
    if gt.is_empty() {
        return Err(Error::InvalidInput("ground truth is empty".into()));
    }
    let counts = overlap(
        &voxelize(pred, cfg.resolution, *bounds)?,
        &voxelize(&gt, cfg.resolution, *bounds)?,
    )?;
    let cd = if pred.is_empty() {
        log::warn!("empty prediction; Chamfer distance undefined");
        None
    } else {
        Some(chamfer_l1(pred, &gt)?)
    };
    Ok(MetricReport {
        iou_masked: counts.iou(IouKind::MaskedRecall),
        iou_masked_literal: counts.iou(IouKind::MaskedLiteral),
        iou_unmasked: counts.iou(IouKind::Unmasked),
        cd_l1: cd,
        cd_l1_x1000: cd.map(|c| c * 1000.0),
        counts,
        resolution: cfg.resolution,
        pred_points: pred.len(),
        gt_points: gt.len(),
        chamfer_convention: CHAMFER_CONVENTION.into(),
    })
}

/// Named rows printed as an aligned table, IOU_m / IOU_un / CD-ℓ1×10³.
pub struct MetricTable<'a> {
    pub rows: &'a [(String, MetricReport)],
}

impl fmt::Display for MetricTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
        writeln!(f, "{:<w$}  {:>8}  {:>8}  {:>12}  {:>10}", "scene", "IOU_m", "IOU_un", "CD-l1x1e3", "IOU_m(lit)")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, m: f64, u: f64, cd: Option<f64>, lit: f64| {
            let cd = cd.map_or_else(|| "-".to_string(), |c| format!("{c:.2}"));
            writeln!(f, "{name:<w$}  {m:>8.3}  {u:>8.3}  {cd:>12}  {lit:>10.3}")
        };
        for (name, r) in self.rows {
            row(f, name, r.iou_masked, r.iou_unmasked, r.cd_l1_x1000, r.iou_masked_literal)?;
        }
        if self.rows.len() > 1 {
            let n = self.rows.len() as f64;
            let mean = |g: fn(&MetricReport) -> f64| self.rows.iter().map(|(_, r)| g(r)).sum::<f64>() / n;
            let cds: Vec<f64> = self.rows.iter().filter_map(|(_, r)| r.cd_l1_x1000).collect();
            let cd = (!cds.is_empty()).then(|| cds.iter().sum::<f64>() / cds.len() as f64);
            row(
                f,
                "average",
                mean(|r| r.iou_masked),
                mean(|r| r.iou_unmasked),
                cd,
                mean(|r| r.iou_masked_literal),
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube() -> Aabb {
        Aabb::new(Vec3::zeros(), Vec3::new(3.0, 3.0, 3.0)).unwrap()
    }

    fn brute_chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
        let d = |p: &Vec3, q: &Vec3| (p - q).abs().sum();
        let dir = |x: &PointCloud, y: &PointCloud| {
            x.points
                .iter()
                .map(|p| y.points.iter().map(|q| d(p, q)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / x.len() as f64
        };
        0.5 * dir(a, b) + 0.5 * dir(b, a)
    }

    #[test]
    fn chamfer_examples() {
        let a = PointCloud::new(vec![Vec3::zeros()]);
        let b = PointCloud::new(vec![Vec3::x()]);
        assert_eq!(chamfer_l1(&a, &b).unwrap(), 1.0);
        assert_eq!(chamfer_l1(&a, &a).unwrap(), 0.0);
        assert!(chamfer_l1(&a, &PointCloud::default()).is_err());
    }

    #[test]
    fn iou_examples() {
        let b = Aabb::new(Vec3::zeros(), Vec3::new(2.0, 1.0, 1.0)).unwrap();
        let mut pred = VoxelOccupancy::empty(2, b).unwrap();
        pred.set(0, 0, 0);
        pred.set(1, 0, 0);
        let mut gt = VoxelOccupancy::empty(2, b).unwrap();
        gt.set(0, 0, 0);
        assert_eq!(iou(&pred, &gt, IouKind::MaskedLiteral).unwrap(), 0.5);
        assert_eq!(iou(&pred, &gt, IouKind::Unmasked).unwrap(), 0.5);
        assert_eq!(iou(&pred, &gt, IouKind::MaskedRecall).unwrap(), 1.0);
        for k in [IouKind::Unmasked, IouKind::MaskedLiteral, IouKind::MaskedRecall] {
            assert_eq!(iou(&pred, &pred, k).unwrap(), 1.0);
        }
        let mut other = VoxelOccupancy::empty(2, b).unwrap();
        other.set(1, 1, 1);
        assert_eq!(iou(&gt, &other, IouKind::Unmasked).unwrap(), 0.0);
        assert_eq!(iou(&gt, &other, IouKind::MaskedRecall).unwrap(), 0.0);
        let empty = VoxelOccupancy::empty(2, b).unwrap();
        assert_eq!(iou(&empty, &empty, IouKind::Unmasked).unwrap(), 1.0);
        let wrong = VoxelOccupancy::empty(3, b).unwrap();
        assert!(iou(&wrong, &gt, IouKind::Unmasked).is_err());
    }

    #[test]
    fn extraction() {
        let zero = DensityGrid::filled([8, 8, 8], cube(), 0.0).unwrap();
        assert!(extract_points(&zero, 85.0, 10, 1).unwrap().is_empty());
        let full = DensityGrid::filled([8, 8, 8], cube(), 100.0).unwrap();
        let c = extract_points(&full, 85.0, 100, 1).unwrap();
        assert_eq!(c.len(), 100);
        assert!(c.points.iter().all(|p| cube().contains(p)));
        // slab of σ_max for x ∈ [1.9, 2.1]
        let n = 31;
        let slab = DensityGrid::from_fn([n, n, n], cube(), |p| {
            if (1.9..=2.1).contains(&p.x) {
                100.0
            } else {
                0.0
            }
        })
        .unwrap();
        let h = slab.cell_size().x;
        let pts = extract_points(&slab, 85.0, 2000, 3).unwrap();
        assert!(!pts.is_empty());
        let inside = pts.points.iter().filter(|p| p.x >= 1.9 - h && p.x <= 2.1 + h).count();
        assert!(inside as f64 >= 0.99 * pts.len() as f64);
        assert!(pts.points.iter().all(|p| slab.trilinear_sample(p) >= 85.0));
    }

    #[test]
    fn evaluate_identity() {
        let mut r = rng::substream(1, "t", 0);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| Vec3::new(r.random_range(0.0..3.0), r.random_range(0.0..3.0), r.random_range(0.0..3.0)))
            .collect();
        let c = PointCloud::new(pts);
        let cfg = EvalConfig::default();
        let rep = evaluate(&c, GroundTruth::Cloud(&c), &default_bounds(&c, 0.05).unwrap(), &cfg).unwrap();
        assert_eq!(rep.iou_masked, 1.0);
        assert_eq!(rep.iou_unmasked, 1.0);
        assert_eq!(rep.cd_l1, Some(0.0));
        let json = serde_json::to_string(&rep).unwrap();
        assert_eq!(serde_json::from_str::<MetricReport>(&json).unwrap(), rep);
        let rows = vec![("a".to_string(), rep.clone()), ("b".to_string(), rep)];
        let text = MetricTable { rows: &rows }.to_string();
        assert!(text.contains("average") && text.contains("IOU_m"));
    }

    fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
        prop::collection::vec((0.0..3.0f64, 0.0..3.0f64, 0.0..3.0f64), 1..100)
            .prop_map(|v| PointCloud::new(v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect()))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn chamfer_matches_brute_force(a in cloud_strategy(), b in cloud_strategy()) {
            let fast = chamfer_l1(&a, &b).unwrap();
            prop_assert!((fast - brute_chamfer(&a, &b)).abs() < 1e-9);
            prop_assert!((fast - chamfer_l1(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn unmasked_iou_is_symmetric_and_monotone(a in cloud_strategy(), b in cloud_strategy()) {
            let va = voxelize(&a, 8, cube()).unwrap();
            let vb = voxelize(&b, 8, cube()).unwrap();
            let ab = iou(&va, &vb, IouKind::Unmasked).unwrap();
            prop_assert_eq!(ab, iou(&vb, &va, IouKind::Unmasked).unwrap());
            // add a correct voxel to the prediction
            if let Some(p) = b.points.first() {
                let [i, j, k] = va.voxel_of(p).unwrap();
                let mut grown = va.clone();
                grown.set(i, j, k);
                prop_assert!(iou(&grown, &vb, IouKind::Unmasked).unwrap() >= ab);
            }
        }
    }
}
