use super::loss::{loss_and_grad, Batch, LossParts};
use super::{CodeKind, GloConfig, LatentCode, Model};
use crate::density::DensitySampleSet;
use crate::error::{Error, Result};
use crate::geom::DensityGrid;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub z_s: LatentCode,
    pub z_t: LatentCode,
    pub scene_field: DensityGrid,
    pub trans_field: DensityGrid,
    /// Loss before each iteration, then after the last one.
    pub trace: Vec<LossParts>,
}

/// Fits fresh latent codes to the observations by plain gradient descent
/// with the decoders frozen.
pub fn infer(
    model: &Model,
    scene_obs: &DensitySampleSet,
    trans_obs: &DensitySampleSet,
    cfg: &GloConfig,
    seed: u64,
) -> Result<InferenceResult> {
    if scene_obs.is_empty() {
        return Err(Error::InvalidInput("inference needs scene observations".into()));
    }
    if trans_obs.is_empty() {
        log::warn!("no transparent observations; fitting the scene code only");
    }
    let mut z_s = LatentCode::sample(
        CodeKind::Scene,
        model.scene_latent(),
        model.sigma_z,
        &mut rng::substream(seed, "glo.infer.scene", 0),
    );
    let mut z_t = LatentCode::sample(
        CodeKind::Trans,
        model.trans_latent(),
        model.sigma_z,
        &mut rng::substream(seed, "glo.infer.trans", 0),
    );
    let (bs, bt) = (Batch::all(scene_obs), Batch::all(trans_obs));
    let scale = cfg.objective.scale(bs.len() + bt.len(), cfg.loss_unit);
    let mut trace = Vec::with_capacity(cfg.infer_iters + 1);
    for it in 0..cfg.infer_iters {
        let (parts, g) = loss_and_grad(model, &z_s, &z_t, bs, bt, false)?;
        if !parts.total().is_finite() {
            return Err(Error::NonFiniteLoss { step: it, scene: 0 });
        }
        trace.push(parts);
        for (z, d) in z_s.values.iter_mut().zip(&g.z_s) {
            *z -= cfg.infer_lr * scale * d;
        }
        for (z, d) in z_t.values.iter_mut().zip(&g.z_t) {
            *z -= cfg.infer_lr * scale * d;
        }
    }
    trace.push(loss_and_grad(model, &z_s, &z_t, bs, bt, false)?.0);
    log::debug!(
        "inference loss {:.6e} -> {:.6e}",
        trace[0].total(),
        trace.last().map_or(f64::NAN, |l| l.total())
    );
    Ok(InferenceResult {
        scene_field: model.decode_scene(&z_s)?,
        trans_field: model.decode_trans(&z_t, &z_s)?,
        z_s,
        z_t,
        trace,
    })
}
