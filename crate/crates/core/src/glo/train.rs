use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;

use rand::seq::{index, SliceRandom};

use super::loss::{loss_and_grad, Batch};
use super::{save_checkpoint, CodeKind, GloConfig, LatentCode, Model};
use crate::density::DensitySampleSet;
use crate::error::{Error, Result};
use crate::rng;
use crate::synthgen::ScenePair;

/// First and second moment estimates of one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// One bias-corrected update with gradient `scale · grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], scale: f64, cfg: &GloConfig) {
        assert_eq!(params.len(), grad.len());
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            let g = g * scale;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
        }
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: GloConfig,
    pub seed: u64,
    pub model: Model,
    pub scene_codes: Vec<LatentCode>,
    pub trans_codes: Vec<LatentCode>,
    pub scene_opt: Adam,
    pub trans_opt: Adam,
    /// One optimizer per training scene over `z_s ⊕ z_t`.
    pub code_opts: Vec<Adam>,
    /// Steps taken so far; one step visits one scene.
    pub step: usize,
    pub dataset_hash: u64,
}

impl TrainState {
    pub fn new(cfg: &GloConfig, num_scenes: usize, seed: u64, dataset_hash: u64) -> Result<Self> {
        if num_scenes == 0 {
            return Err(Error::InvalidInput("training needs at least one scene".into()));
        }
        let model = Model::new(cfg, seed)?;
        let scene_codes = (0..num_scenes)
            .map(|i| {
                let mut r = rng::substream(seed, "glo.code.scene", i as u64);
                LatentCode::sample(CodeKind::Scene, cfg.scene_latent, cfg.sigma_z, &mut r)
            })
            .collect();
        let trans_codes = (0..num_scenes)
            .map(|i| {
                let mut r = rng::substream(seed, "glo.code.trans", i as u64);
                LatentCode::sample(CodeKind::Trans, cfg.trans_latent, cfg.sigma_z, &mut r)
            })
            .collect();
        Ok(Self {
            config: cfg.clone(),
            seed,
            scene_opt: Adam::new(model.scene.num_params()),
            trans_opt: Adam::new(model.trans.num_params()),
            code_opts: vec![Adam::new(cfg.scene_latent + cfg.trans_latent); num_scenes],
            model,
            scene_codes,
            trans_codes,
            step: 0,
            dataset_hash,
        })
    }

    pub fn num_scenes(&self) -> usize {
        self.scene_codes.len()
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.step / self.num_scenes()
    }

    /// The scene visited at `step`: each epoch is a seeded permutation.
    pub fn scene_at(&self, step: usize) -> usize {
        let n = self.num_scenes();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::substream(self.seed, "glo.order", (step / n) as u64));
        order[step % n]
    }
}

/// Losses of one optimizer step, raw sums as in the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub step: usize,
    pub scene: usize,
    pub loss_scene: f64,
    pub loss_trans: f64,
}

impl StepLoss {
    pub fn total(&self) -> f64 {
        self.loss_scene + self.loss_trans
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Stop once this many epochs are complete; defaults to the config.
    pub epochs: Option<usize>,
    /// Stop once this many steps are complete.
    pub max_steps: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
    /// CSV trace `step,loss_scene,loss_trans,loss_total`, appended to when
    /// resuming.
    pub loss_csv: Option<PathBuf>,
}

/// FNV-1a over every sample of every scene.
pub fn dataset_hash(sets: &[(DensitySampleSet, DensitySampleSet)]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: f64| {
        for b in x.to_bits().to_le_bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
        }
    };
    for (s, t) in sets {
        for set in [s, t] {
            eat(set.len() as f64);
            for (p, d) in set.iter() {
                p.iter().for_each(|&c| eat(c));
                eat(d);
            }
        }
    }
    h
}

fn open_trace(path: &PathBuf, append: bool) -> Result<File> {
    let fresh = !append || !path.exists();
    let mut f = if fresh {
        File::create(path)
    } else {
        OpenOptions::new().append(true).open(path)
    }
    .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(f, "step,loss_scene,loss_trans,loss_total").map_err(|e| Error::io(path, e))?;
    }
    Ok(f)
}

fn batch_indices(cfg: &GloConfig, seed: u64, step: usize, name: &str, len: usize) -> Option<Vec<usize>> {
    (cfg.batch_samples > 0 && cfg.batch_samples < len).then(|| {
        let mut r = rng::substream(seed, name, step as u64);
        let mut idx = index::sample(&mut r, len, cfg.batch_samples).into_vec();
        idx.sort_unstable();
        idx
    })
}

/// Continues training `state` on `(scene, trans)` sample sets, one per
/// training scene.
pub fn train_with(
    state: &mut TrainState,
    data: &[(DensitySampleSet, DensitySampleSet)],
    opts: &TrainOptions,
) -> Result<Vec<StepLoss>> {
    if data.len() != state.num_scenes() {
        return Err(Error::Mismatch(format!(
            "state has {} scene codes but {} scenes were given",
            state.num_scenes(),
            data.len()
        )));
    }
    if let Some(i) = data.iter().position(|(s, _)| s.is_empty()) {
        return Err(Error::InvalidInput(format!("scene {i} has no scene samples")));
    }
    let n = state.num_scenes();
    let epochs = opts.epochs.unwrap_or(state.config.epochs);
    let end = opts.max_steps.map_or(epochs * n, |m| m.min(epochs * n));
    let mut trace_file = match &opts.loss_csv {
        Some(p) => Some(open_trace(p, state.step > 0)?),
        None => None,
    };
    if let Some(d) = &opts.checkpoint_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let cfg = state.config.clone();
    let mut trace = Vec::new();
    let mut epoch_sum = 0.0;
    while state.step < end {
        let step = state.step;
        let i = state.scene_at(step);
        let (xs, xt) = &data[i];
        let bs = batch_indices(&cfg, state.seed, step, "glo.batch.scene", xs.len());
        let bt = batch_indices(&cfg, state.seed, step, "glo.batch.trans", xt.len());
        let (bs, bt) = (
            Batch { set: xs, subset: bs.as_deref() },
            Batch { set: xt, subset: bt.as_deref() },
        );
        let (parts, grads) = loss_and_grad(
            &state.model,
            &state.scene_codes[i],
            &state.trans_codes[i],
            bs,
            bt,
            true,
        )?;
        if !parts.total().is_finite() {
            return Err(Error::NonFiniteLoss { step, scene: i });
        }
        let scale = cfg.objective.scale(bs.len() + bt.len(), cfg.loss_unit);
        let (gs, gt) = (grads.scene.expect("weights"), grads.trans.expect("weights"));
        state.scene_opt.step(&mut state.model.scene.params, &gs, scale, &cfg);
        state.trans_opt.step(&mut state.model.trans.params, &gt, scale, &cfg);
        let ns = cfg.scene_latent;
        let mut code: Vec<f64> = state.scene_codes[i].values.clone();
        code.extend_from_slice(&state.trans_codes[i].values);
        let mut gcode = grads.z_s;
        gcode.extend_from_slice(&grads.z_t);
        state.code_opts[i].step(&mut code, &gcode, scale, &cfg);
        state.scene_codes[i].values.copy_from_slice(&code[..ns]);
        state.trans_codes[i].values.copy_from_slice(&code[ns..]);
        state.step += 1;

        let rec = StepLoss {
            step,
            scene: i,
            loss_scene: parts.scene,
            loss_trans: parts.trans,
        };
        if let (Some(f), Some(p)) = (trace_file.as_mut(), &opts.loss_csv) {
            writeln!(f, "{},{:e},{:e},{:e}", step, rec.loss_scene, rec.loss_trans, rec.total())
                .map_err(|e| Error::io(p, e))?;
        }
        epoch_sum += rec.total();
        trace.push(rec);
        if state.step % n == 0 {
            let epoch = state.epoch();
            log::info!("epoch {epoch}: mean loss {:.6e}", epoch_sum / n as f64);
            epoch_sum = 0.0;
            if let Some(dir) = &opts.checkpoint_dir {
                if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                    save_checkpoint(state, dir.join(format!("epoch_{epoch:04}.ckpt")))?;
                }
            }
        }
    }
    if let Some(dir) = &opts.checkpoint_dir {
        save_checkpoint(state, dir.join("last.ckpt"))?;
    }
    Ok(trace)
}

/// Scene samples and transparent training samples of each pair.
pub fn training_sets(dataset: &[ScenePair], cfg: &GloConfig, seed: u64) -> Vec<(DensitySampleSet, DensitySampleSet)> {
    dataset
        .iter()
        .map(|p| (p.scene_samples(), p.trans_training_samples(cfg.trans_negative_ratio, seed)))
        .collect()
}

/// Trains a fresh model on `dataset` for `cfg.epochs` epochs.
pub fn train(dataset: &[ScenePair], cfg: &GloConfig, seed: u64) -> Result<(TrainState, Vec<StepLoss>)> {
    let data = training_sets(dataset, cfg, seed);
    let mut state = TrainState::new(cfg, data.len(), seed, dataset_hash(&data))?;
    let trace = train_with(&mut state, &data, &TrainOptions::default())?;
    Ok((state, trace))
}
