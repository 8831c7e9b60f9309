//! Scene and transparent density decoders fit by latent optimization.

mod checkpoint;
mod decoder;
mod gradcheck;
mod infer;
mod loss;
mod train;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, write_metadata, ModelMetadata};
pub use decoder::{Activations, Decoder, DecoderArch, BASE_RES, SILU_LIPSCHITZ};
pub use gradcheck::{grad_check, GradCheckReport};
pub use infer::{infer, InferenceResult};
pub use loss::{loss_scene, loss_train, loss_trans, regularizer, LossParts};
pub use train::{dataset_hash, train, train_with, training_sets, Adam, StepLoss, TrainOptions, TrainState};

use crate::error::{Error, Result};
use crate::geom::{Aabb, DensityGrid, Vec3};
use crate::rng;

/// How the optimizer scales the summed objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Summed loss divided by `N·u²`: the mean squared residual with
    /// densities measured in units of `u` (`GloConfig::loss_unit`).
    Normalized,
    /// Summed loss divided by the number of samples in the step.
    PerSample,
    /// The summed loss as is.
    Sum,
}

impl Objective {
    /// Factor applied to the summed loss over `n` samples.
    pub fn scale(self, n: usize, unit: f64) -> f64 {
        let n = n.max(1) as f64;
        match self {
            Objective::Normalized => 1.0 / (n * unit * unit),
            Objective::PerSample => 1.0 / n,
            Objective::Sum => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GloConfig {
    pub scene_latent: usize,
    pub trans_latent: usize,
    /// Decoded nodes per axis.
    pub grid: usize,
    pub widths: Vec<usize>,
    pub sigma_max: f64,
    pub sigma_z: f64,
    /// Size of the decoded box, whose minimum corner is the origin.
    pub bounds: [f64; 3],
    pub epochs: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Samples drawn per set and step; 0 uses every sample.
    pub batch_samples: usize,
    /// Zero-density samples per glass sample in the transparent training set.
    pub trans_negative_ratio: f64,
    pub checkpoint_every: usize,
    pub infer_iters: usize,
    pub infer_lr: f64,
    pub objective: Objective,
    /// Density unit of the normalized objective. Adam training does not
    /// care; it sets the effective step of the plain gradient descent used
    /// at inference.
    pub loss_unit: f64,
}

impl Default for GloConfig {
    fn default() -> Self {
        Self {
            scene_latent: 256,
            trans_latent: 8,
            grid: 32,
            widths: vec![32, 16, 8],
            sigma_max: 100.0,
            sigma_z: 0.01,
            bounds: [3.0, 3.0, 4.0],
            epochs: 30,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_samples: 0,
            trans_negative_ratio: 2.0,
            checkpoint_every: 10,
            infer_iters: 25,
            infer_lr: 8e-3,
            objective: Objective::Normalized,
            loss_unit: 20.0,
        }
    }
}

impl GloConfig {
    pub fn scene_arch(&self) -> DecoderArch {
        DecoderArch {
            latent_dim: self.scene_latent,
            grid: self.grid,
            widths: self.widths.clone(),
            sigma_max: self.sigma_max,
        }
    }

    /// The transparent decoder reads `z_t ⊕ z_s`.
    pub fn trans_arch(&self) -> DecoderArch {
        DecoderArch {
            latent_dim: self.trans_latent + self.scene_latent,
            ..self.scene_arch()
        }
    }

    pub fn bounds(&self) -> Result<Aabb> {
        Aabb::from_origin_size(Vec3::zeros(), Vec3::from(self.bounds))
    }

    pub fn validate(&self) -> Result<()> {
        self.scene_arch().validate()?;
        if self.trans_latent == 0 {
            return Err(Error::InvalidInput("trans_latent must be ≥ 1".into()));
        }
        self.bounds()?;
        let positive = [
            ("sigma_z", self.sigma_z),
            ("lr", self.lr),
            ("adam_eps", self.adam_eps),
            ("infer_lr", self.infer_lr),
            ("loss_unit", self.loss_unit),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.trans_negative_ratio >= 0.0 && self.trans_negative_ratio.is_finite()) {
            return Err(Error::InvalidInput("trans_negative_ratio must be ≥ 0".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeKind {
    Scene,
    Trans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub kind: CodeKind,
    pub values: Vec<f64>,
}

impl LatentCode {
    pub fn zeros(kind: CodeKind, len: usize) -> Self {
        Self {
            kind,
            values: vec![0.0; len],
        }
    }

    /// I.i.d. `N(0, σ_z²)` entries.
    pub fn sample(kind: CodeKind, len: usize, sigma_z: f64, rng: &mut rng::Rng) -> Self {
        let d = Normal::new(0.0, sigma_z).expect("sigma_z is positive");
        Self {
            kind,
            values: (0..len).map(|_| d.sample(rng)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Scene,
    Trans,
}

/// The two decoders `f^s_θ` and `f^t_φ` plus the box they decode into.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub scene: Decoder,
    pub trans: Decoder,
    pub bounds: Aabb,
    pub sigma_z: f64,
}

impl Model {
    pub fn new(cfg: &GloConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            scene: Decoder::init(cfg.scene_arch(), &mut rng::substream(seed, "glo.init.scene", 0))?,
            trans: Decoder::init(cfg.trans_arch(), &mut rng::substream(seed, "glo.init.trans", 0))?,
            bounds: cfg.bounds()?,
            sigma_z: cfg.sigma_z,
        })
    }

    pub fn scene_latent(&self) -> usize {
        self.scene.arch().latent_dim
    }

    pub fn trans_latent(&self) -> usize {
        self.trans.arch().latent_dim - self.scene_latent()
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        [self.scene.arch().grid; 3]
    }

    pub fn sigma_max(&self) -> f64 {
        self.scene.arch().sigma_max
    }

    pub(crate) fn check_codes(&self, z_s: &LatentCode, z_t: Option<&LatentCode>) -> Result<()> {
        if z_s.kind != CodeKind::Scene || z_s.len() != self.scene_latent() {
            return Err(Error::InvalidInput(format!(
                "expected a scene code of length {}, got a {:?} code of length {}",
                self.scene_latent(),
                z_s.kind,
                z_s.len()
            )));
        }
        if let Some(z_t) = z_t {
            if z_t.kind != CodeKind::Trans || z_t.len() != self.trans_latent() {
                return Err(Error::InvalidInput(format!(
                    "expected a trans code of length {}, got a {:?} code of length {}",
                    self.trans_latent(),
                    z_t.kind,
                    z_t.len()
                )));
            }
        }
        Ok(())
    }

    fn grid(&self, values: Vec<f64>) -> Result<DensityGrid> {
        DensityGrid::new(self.grid_dims(), self.bounds, values)
    }

    pub fn decode_scene(&self, z_s: &LatentCode) -> Result<DensityGrid> {
        self.check_codes(z_s, None)?;
        self.grid(self.scene.forward(&z_s.values)?)
    }

    pub fn decode_trans(&self, z_t: &LatentCode, z_s: &LatentCode) -> Result<DensityGrid> {
        self.check_codes(z_s, Some(z_t))?;
        self.grid(self.trans.forward(&concat(z_t, z_s))?)
    }

    /// Decodes the requested field and samples it trilinearly at `points`.
    pub fn field_at(
        &self,
        z_s: &LatentCode,
        z_t: &LatentCode,
        points: &[Vec3],
        which: FieldKind,
    ) -> Result<Vec<f64>> {
        let grid = match which {
            FieldKind::Scene => self.decode_scene(z_s)?,
            FieldKind::Trans => self.decode_trans(z_t, z_s)?,
        };
        Ok(points.iter().map(|p| grid.trilinear_sample(p)).collect())
    }
}

pub(crate) fn concat(z_t: &LatentCode, z_s: &LatentCode) -> Vec<f64> {
    z_t.values.iter().chain(&z_s.values).copied().collect()
}

pub fn decode_scene(model: &Model, z_s: &LatentCode) -> Result<DensityGrid> {
    model.decode_scene(z_s)
}

pub fn decode_trans(model: &Model, z_t: &LatentCode, z_s: &LatentCode) -> Result<DensityGrid> {
    model.decode_trans(z_t, z_s)
}

pub fn field_at(
    model: &Model,
    z_s: &LatentCode,
    z_t: &LatentCode,
    points: &[Vec3],
    which: FieldKind,
) -> Result<Vec<f64>> {
    model.field_at(z_s, z_t, points, which)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> GloConfig {
        GloConfig {
            scene_latent: 6,
            trans_latent: 3,
            grid: 8,
            widths: vec![6, 4],
            ..GloConfig::default()
        }
    }

    #[test]
    fn trans_decoder_reads_both_codes() {
        assert_eq!(GloConfig::default().trans_arch().latent_dim, 264);
        let m = Model::new(&tiny(), 1).unwrap();
        assert_eq!((m.scene_latent(), m.trans_latent()), (6, 3));
    }

    #[test]
    fn zero_codes_decode_to_constant_grids() {
        let m = Model::new(&tiny(), 2).unwrap();
        let zs = LatentCode::zeros(CodeKind::Scene, 6);
        let zt = LatentCode::zeros(CodeKind::Trans, 3);
        for g in [m.decode_scene(&zs).unwrap(), m.decode_trans(&zt, &zs).unwrap()] {
            assert!(g.values().iter().all(|&v| v == 50.0));
        }
    }

    #[test]
    fn wrong_code_kinds_are_rejected() {
        let m = Model::new(&tiny(), 3).unwrap();
        let zs = LatentCode::zeros(CodeKind::Scene, 6);
        let zt = LatentCode::zeros(CodeKind::Trans, 3);
        assert!(m.decode_scene(&zt).is_err());
        assert!(m.decode_trans(&zs, &zs).is_err());
        assert!(m.decode_scene(&LatentCode::zeros(CodeKind::Scene, 5)).is_err());
    }

    #[test]
    fn field_at_nodes_and_cell_centres() {
        let m = Model::new(&tiny(), 4).unwrap();
        let mut r = rng::substream(4, "z", 0);
        let zs = LatentCode::sample(CodeKind::Scene, 6, 1.0, &mut r);
        let zt = LatentCode::sample(CodeKind::Trans, 3, 1.0, &mut r);
        let grid = m.decode_trans(&zt, &zs).unwrap();
        let node = grid.node_position(2, 5, 3);
        let v = m.field_at(&zs, &zt, &[node], FieldKind::Trans).unwrap()[0];
        assert_eq!(v, grid.get(2, 5, 3));
        let corners: Vec<Vec3> = (0..8)
            .map(|c| grid.node_position(3 + (c & 1), 1 + ((c >> 1) & 1), 4 + (c >> 2)))
            .collect();
        let centre = corners.iter().sum::<Vec3>() / 8.0;
        let vals = m.field_at(&zs, &zt, &corners, FieldKind::Trans).unwrap();
        let mid = m.field_at(&zs, &zt, &[centre], FieldKind::Trans).unwrap()[0];
        assert!((mid - vals.iter().sum::<f64>() / 8.0).abs() < 1e-9);
        // random points against the grid's own sampler
        let pts: Vec<Vec3> = (0..50)
            .map(|_| Vec3::new(r.random_range(0.0..3.0), r.random_range(0.0..3.0), r.random_range(0.0..4.0)))
            .collect();
        let got = m.field_at(&zs, &zt, &pts, FieldKind::Scene).unwrap();
        let sg = m.decode_scene(&zs).unwrap();
        for (p, g) in pts.iter().zip(got) {
            assert!((sg.trilinear_sample(p) - g).abs() < 1e-9);
        }
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<GloConfig>(r#"{"grid": 16, "nope": 1}"#).is_err());
        let c: GloConfig = serde_json::from_str(r#"{"grid": 16}"#).unwrap();
        assert_eq!(c.grid, 16);
        assert!(GloConfig { grid: 12, ..GloConfig::default() }.validate().is_err());
    }
}
