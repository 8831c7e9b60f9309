//! End-to-end reconstruction of one capture: acoustic returns, ASPP,
//! latent inference against a trained model, and point extraction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aspp::{build_pillars, glass_rays, sample_aspp, AsppConfig, AsppPoints, Pillar};
use crate::density::DensitySampleSet;
use crate::error::{Error, Result};
use crate::eval::{evaluate, extract_points, EvalConfig, GroundTruth, MetricReport};
use crate::geom::{Aabb, PointCloud};
use crate::glo::{infer, GloConfig, InferenceResult, Model};
use crate::ingest::{build_apc, load_manifest, AcousticPointCloud, Capture, RangeGate, DEFAULT_TIME_MARGIN};
use crate::rng;
use crate::simfix::{capture_pair, glass_mesh, SimConfig, SweepConfig};
use crate::synthgen::{sample_free_space, ScenePair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub aspp: AsppConfig,
    pub gate: RangeGate,
    /// Slack when matching ping times to the trajectory, seconds.
    pub time_margin: f64,
    /// Density at which fields are turned back into points.
    pub threshold: f64,
    pub extract_points: usize,
    /// Spacing of zero-density samples along each acoustic ray, meters.
    pub ray_free_spacing: f64,
    /// Free samples stop at this fraction of the measured range.
    pub ray_free_stop: f64,
    /// Free-space scene samples per observed scene point.
    pub scene_free_ratio: f64,
    pub free_clearance: f64,
    /// Skip inference and report the ASPP points as the transparent
    /// prediction.
    pub aspp_only: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            aspp: AsppConfig::default(),
            gate: RangeGate::default(),
            time_margin: DEFAULT_TIME_MARGIN,
            threshold: 85.0,
            extract_points: 20_000,
            ray_free_spacing: 0.1,
            ray_free_stop: 0.9,
            scene_free_ratio: 1.0,
            free_clearance: 0.26,
            aspp_only: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.aspp;
        if !(a.epsilon > 0.0 && a.t_max > 0.0 && a.spacing > 0.0 && a.stride > 0) {
            return Err(Error::InvalidInput("ASPP epsilon, t_max, spacing and stride must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidInput(format!("threshold {} must be positive", self.threshold)));
        }
        if !(self.ray_free_spacing > 0.0 && self.ray_free_stop > 0.0 && self.ray_free_stop < 1.0) {
            return Err(Error::InvalidInput("ray free spacing must be positive and the stop fraction in (0, 1)".into()));
        }
        if !(self.scene_free_ratio >= 0.0 && self.free_clearance > 0.0 && self.time_margin >= 0.0) {
            return Err(Error::InvalidInput("free ratio, clearance and time margin must be non-negative".into()));
        }
        Ok(())
    }
}

/// Acoustic stage output.
#[derive(Debug, Clone, Default)]
pub struct AcousticEvidence {
    pub apc: AcousticPointCloud,
    pub pillars: Vec<Pillar>,
    pub aspp: AsppPoints,
}

pub fn acoustic_evidence(capture: &Capture, cfg: &PipelineConfig) -> Result<AcousticEvidence> {
    let apc = build_apc(&capture.pings, &capture.trajectory, &cfg.gate, cfg.time_margin)?;
    let rays = glass_rays(&capture.frames, &capture.masks, cfg.aspp.stride)?;
    let pillars = build_pillars(&apc.points.points, &rays, cfg.aspp.epsilon, cfg.aspp.t_max)?;
    let aspp = sample_aspp(&pillars, cfg.aspp.spacing)?;
    log::info!(
        "{} acoustic points, {} glass rays, {} pillars ({} degenerate), {} ASPP points",
        apc.len(),
        rays.len(),
        pillars.len(),
        pillars.iter().filter(|p| p.is_degenerate()).count(),
        aspp.len()
    );
    Ok(AcousticEvidence { apc, pillars, aspp })
}

fn inside(cloud: &PointCloud, bounds: &Aabb) -> PointCloud {
    PointCloud::new(cloud.points.iter().copied().filter(|p| bounds.contains(p)).collect())
}

/// Density observations for inference.
///
/// Scene: the depth cloud at `σ_max` plus free-space samples kept
/// `free_clearance` away from every observed surface. Transparent: the
/// acoustic and ASPP points at `σ_max` plus zero-density samples along each
/// acoustic ray short of its return. Everything outside `bounds` is dropped.
pub fn observations(
    capture: &Capture,
    evidence: &AcousticEvidence,
    bounds: &Aabb,
    sigma_max: f64,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(DensitySampleSet, DensitySampleSet)> {
    let scene_pts = inside(&capture.scene_cloud, bounds);
    let trans_pts = {
        let mut c = evidence.apc.points.clone();
        c.extend(&evidence.aspp.points);
        inside(&c, bounds)
    };

    let mut ray_free = PointCloud::default();
    for (p, o) in evidence.apc.points.points.iter().zip(&evidence.apc.origins) {
        let d = p - o;
        let stop = cfg.ray_free_stop * d.norm();
        let steps = (stop / cfg.ray_free_spacing).floor() as usize;
        for k in 0..=steps {
            let q = o + d.normalize() * (k as f64 * cfg.ray_free_spacing);
            if bounds.contains(&q) {
                ray_free.points.push(q);
            }
        }
    }

    let mut surfaces = scene_pts.clone();
    surfaces.extend(&trans_pts);
    let n_free = (cfg.scene_free_ratio * scene_pts.len() as f64).round() as usize;
    let free = sample_free_space(
        bounds,
        n_free,
        &surfaces,
        cfg.free_clearance,
        rng::derive_seed(seed, "pipeline.free", 0),
    )?;

    let scene = DensitySampleSet::from_clouds(&[(&scene_pts, sigma_max), (&free, 0.0)]);
    let trans = DensitySampleSet::from_clouds(&[(&trans_pts, sigma_max), (&ray_free, 0.0)]);
    Ok((scene, trans))
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub evidence: AcousticEvidence,
    /// `None` in ASPP-only mode.
    pub inference: Option<InferenceResult>,
    pub trans_cloud: PointCloud,
    pub scene_cloud: PointCloud,
}

/// Runs the full pipeline on one capture. In ASPP-only mode the model is
/// not consulted and the prediction is the ASPP point set next to the
/// captured depth cloud.
pub fn reconstruct(
    capture: &Capture,
    model: Option<(&Model, &GloConfig)>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Reconstruction> {
    cfg.validate()?;
    let evidence = acoustic_evidence(capture, cfg)?;
    if cfg.aspp_only {
        return Ok(Reconstruction {
            trans_cloud: evidence.aspp.points.clone(),
            scene_cloud: capture.scene_cloud.clone(),
            evidence,
            inference: None,
        });
    }
    let (model, glo) = model.ok_or_else(|| Error::InvalidInput("inference needs a trained model".into()))?;
    if !(cfg.threshold < model.sigma_max()) {
        return Err(Error::InvalidInput(format!(
            "threshold {} must lie below σ_max = {}",
            cfg.threshold,
            model.sigma_max()
        )));
    }
    let (scene_obs, trans_obs) = observations(capture, &evidence, &model.bounds, model.sigma_max(), cfg, seed)?;
    let result = infer(model, &scene_obs, &trans_obs, glo, seed)?;
    let extract_seed = rng::derive_seed(seed, "pipeline.extract", 0);
    let trans_cloud = extract_points(&result.trans_field, cfg.threshold, cfg.extract_points, extract_seed)?;
    let scene_cloud = extract_points(
        &result.scene_field,
        cfg.threshold,
        cfg.extract_points,
        rng::derive_seed(seed, "pipeline.extract", 1),
    )?;
    Ok(Reconstruction {
        evidence,
        inference: Some(result),
        trans_cloud,
        scene_cloud,
    })
}

/// Masked-IOU comparison of the three transparent predictions on one
/// held-out scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub scene: usize,
    /// Depth cloud only; glass is invisible to it.
    pub depth_only: MetricReport,
    pub aspp_only: MetricReport,
    pub vair: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub pipeline: PipelineConfig,
    pub sim: SimConfig,
    pub sweep: SweepConfig,
    pub eval: EvalConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            sim: SimConfig::default(),
            sweep: SweepConfig::default(),
            eval: EvalConfig {
                gt_samples: 200_000,
                ..EvalConfig::default()
            },
        }
    }
}

/// Captures `pair` with the simulator into `dir`, reconstructs it with and
/// without the model, and scores all three arms against the glass over the
/// scene bounds.
pub fn ablate_scene(
    pair: &ScenePair,
    model: &Model,
    glo: &GloConfig,
    cfg: &AblationConfig,
    seed: u64,
    dir: &Path,
) -> Result<AblationRow> {
    let cap = capture_pair(pair, &cfg.sim, &cfg.sweep, seed, dir)?;
    let capture = load_manifest(&cap.manifest)?;
    let vair = reconstruct(&capture, Some((model, glo)), &cfg.pipeline, seed)?;
    let gt = glass_mesh(&pair.glass);
    let score = |pred: &PointCloud| evaluate(pred, GroundTruth::Mesh(&gt), &pair.bounds, &cfg.eval);
    Ok(AblationRow {
        scene: pair.layout.index,
        depth_only: score(&capture.scene_cloud)?,
        aspp_only: score(&vair.evidence.aspp.points)?,
        vair: score(&vair.trans_cloud)?,
    })
}

/// Mean masked IOU of each arm: `(depth_only, aspp_only, vair)`.
pub fn ablation_means(rows: &[AblationRow]) -> (f64, f64, f64) {
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&AblationRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    (
        mean(|r| r.depth_only.iou_masked),
        mean(|r| r.aspp_only.iou_masked),
        mean(|r| r.vair.iou_masked),
    )
}
