//! Checkpoints: `VAIRCKPT`, u32 version, u64 header length, a JSON header,
//! then every tensor of the training state as little-endian f64.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CodeKind, Decoder, GloConfig, LatentCode, Model};
use super::train::{Adam, TrainState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"VAIRCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: GloConfig,
    seed: u64,
    step: usize,
    epoch: usize,
    num_scenes: usize,
    dataset_hash: u64,
    scene_params: usize,
    trans_params: usize,
    scene_opt_t: u64,
    trans_opt_t: u64,
    code_opt_t: Vec<u64>,
}

/// Summary of a trained model, written next to checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub scene_latent: usize,
    pub trans_latent: usize,
    pub grid_dims: [usize; 3],
    pub sigma_max: f64,
    pub sigma_z: f64,
    pub bounds: [f64; 3],
    pub seed: u64,
    pub dataset_hash: String,
    pub num_scenes: usize,
    pub epoch: usize,
    pub step: usize,
}

impl ModelMetadata {
    pub fn of(state: &TrainState) -> Self {
        let c = &state.config;
        Self {
            scene_latent: c.scene_latent,
            trans_latent: c.trans_latent,
            grid_dims: [c.grid; 3],
            sigma_max: c.sigma_max,
            sigma_z: c.sigma_z,
            bounds: c.bounds,
            seed: state.seed,
            dataset_hash: format!("{:016x}", state.dataset_hash),
            num_scenes: state.num_scenes(),
            epoch: state.epoch(),
            step: state.step,
        }
    }
}

pub fn write_metadata(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&ModelMetadata::of(state)).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        config: state.config.clone(),
        seed: state.seed,
        step: state.step,
        epoch: state.epoch(),
        num_scenes: state.num_scenes(),
        dataset_hash: state.dataset_hash,
        scene_params: state.model.scene.num_params(),
        trans_params: state.model.trans.num_params(),
        scene_opt_t: state.scene_opt.t,
        trans_opt_t: state.trans_opt.t,
        code_opt_t: state.code_opts.iter().map(|a| a.t).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    let mut put = |xs: &[f64]| xs.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
    put(&state.model.scene.params);
    put(&state.model.trans.params);
    for opt in [&state.scene_opt, &state.trans_opt] {
        put(&opt.m);
        put(&opt.v);
    }
    for i in 0..state.num_scenes() {
        put(&state.scene_codes[i].values);
        put(&state.trans_codes[i].values);
        put(&state.code_opts[i].m);
        put(&state.code_opts[i].v);
    }
    // write-then-rename so a crash never leaves a torn checkpoint
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    ctx: String,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse(&self.ctx, format!("truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::parse(&self.ctx, "size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let mut r = Reader { bytes: &bytes, at: 0, ctx: ctx.clone() };
    if r.take(8)? != MAGIC {
        return Err(Error::parse(&ctx, "not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::parse(&ctx, format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let header: Header =
        serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::parse(&ctx, format!("header: {e}")))?;
    let cfg = header.config;
    cfg.validate()?;
    if header.code_opt_t.len() != header.num_scenes || header.num_scenes == 0 {
        return Err(Error::parse(&ctx, "scene count does not match the optimizer state"));
    }
    let scene = Decoder::from_params(cfg.scene_arch(), r.f64s(header.scene_params)?)?;
    let trans = Decoder::from_params(cfg.trans_arch(), r.f64s(header.trans_params)?)?;
    let opt = |r: &mut Reader, n: usize, t: u64| -> Result<Adam> {
        Ok(Adam {
            t,
            m: r.f64s(n)?,
            v: r.f64s(n)?,
        })
    };
    let scene_opt = opt(&mut r, header.scene_params, header.scene_opt_t)?;
    let trans_opt = opt(&mut r, header.trans_params, header.trans_opt_t)?;
    let (mut scene_codes, mut trans_codes, mut code_opts) = (Vec::new(), Vec::new(), Vec::new());
    for &t in &header.code_opt_t {
        scene_codes.push(LatentCode {
            kind: CodeKind::Scene,
            values: r.f64s(cfg.scene_latent)?,
        });
        trans_codes.push(LatentCode {
            kind: CodeKind::Trans,
            values: r.f64s(cfg.trans_latent)?,
        });
        code_opts.push(opt(&mut r, cfg.scene_latent + cfg.trans_latent, t)?);
    }
    if r.at != bytes.len() {
        return Err(Error::parse(&ctx, format!("{} trailing bytes", bytes.len() - r.at)));
    }
    if header.epoch != header.step / header.num_scenes {
        return Err(Error::parse(&ctx, "epoch and step disagree"));
    }
    Ok(TrainState {
        model: Model {
            scene,
            trans,
            bounds: cfg.bounds()?,
            sigma_z: cfg.sigma_z,
        },
        config: cfg,
        seed: header.seed,
        scene_codes,
        trans_codes,
        scene_opt,
        trans_opt,
        code_opts,
        step: header.step,
        dataset_hash: header.dataset_hash,
    })
}
