//! Batch front end: dataset generation, training, inference, evaluation and
//! capture simulation.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use vair_core::eval::{default_bounds, evaluate, EvalConfig, GroundTruth, MetricReport, MetricTable};
use vair_core::geom::{ply, Aabb, PointCloud, TriMesh, Vec3};
use vair_core::glo::{
    load_checkpoint, train_with, training_sets, dataset_hash, write_metadata, GloConfig, LossParts, TrainOptions,
    TrainState,
};
use vair_core::ingest::{load_manifest, StampedPose};
use vair_core::pipeline::{ablate_scene, ablation_means, reconstruct, AblationConfig, AblationRow};
use vair_core::simfix::{capture_pair, simulate_capture, sweep_all, AnalyticScene};
use vair_core::synthgen::{load_dataset, make_dataset, scene_dir_name, write_dataset, Dataset};

pub mod config;

use config::{Loaded, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, bad config, or inputs that do not fit together.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] vair_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "vair", version, about = "Transparent-surface reconstruction from vision and acoustics")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. 1 makes every command bit-reproducible.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic training dataset.
    Gen(GenArgs),
    /// Train the scene and transparent decoders.
    Train(TrainArgs),
    /// Reconstruct a capture with a trained model.
    Infer(InferArgs),
    /// Score predictions, or run the held-out ablation.
    Eval(EvalArgs),
    /// Simulate a capture of a generated or hand-written scene.
    Sim(SimArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub scenes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `gen`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Only the first N scenes of the dataset.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Stop after this many steps in total.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, required_unless_present = "aspp_only")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Report the ASPP points as the transparent prediction.
    #[arg(long)]
    pub aspp_only: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted cloud (PLY).
    #[arg(long, requires = "gt", conflicts_with = "ablation")]
    pub pred: Option<PathBuf>,
    /// Ground truth PLY; meshes are sampled, clouds used as is.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Evaluation box `x0,y0,z0,x1,y1,z1`; defaults to the padded
    /// ground-truth box.
    #[arg(long, value_delimiter = ',', num_args = 6)]
    pub bounds: Option<Vec<f64>>,
    /// Compare depth-only, ASPP-only and full reconstruction on held-out
    /// dataset scenes.
    #[arg(long, requires_all = ["data", "checkpoint"])]
    pub ablation: bool,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// First held-out scene index.
    #[arg(long, default_value_t = 0)]
    pub first: usize,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Dataset directory; captures scene `--index`.
    #[arg(long, requires = "index", conflicts_with = "scene")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<usize>,
    /// Analytic scene JSON (walls, glass, bounds).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Trajectory JSON, a list of `{t, pose}`; defaults to a sweep past
    /// every pane.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

/// Installs the logger once; level from `VAIR_LOG` (default `info`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("VAIR_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let loaded = config::load(cli.config.as_deref())?;
    let mut cfg = loaded.config.clone();
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads.or(cfg.threads) {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        cfg.threads = Some(t);
        if rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            log::debug!("thread pool already initialised");
        }
    }
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Gen(a) => cmd_gen(&cfg, a, need_out(out)?),
        Command::Train(a) => cmd_train(&loaded, &cfg, a, need_out(out)?),
        Command::Infer(a) => cmd_infer(&loaded, &cfg, a, need_out(out)?),
        Command::Eval(a) => cmd_eval(&loaded, &cfg, a, out),
        Command::Sim(a) => cmd_sim(&cfg, a, need_out(out)?),
    }
}

fn need_out(out: Option<&Path>) -> Result<&Path, CliError> {
    out.ok_or_else(|| usage("--out is required for this command"))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| vair_core::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| vair_core::Error::Format(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| vair_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn need_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn need_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

pub fn cmd_gen(cfg: &RunConfig, a: &GenArgs, out: &Path) -> Result<(), CliError> {
    let n = a.scenes.ok_or_else(|| usage("--scenes is required"))?;
    if n == 0 {
        return Err(usage("--scenes must be at least 1"));
    }
    cfg.synth.validate().map_err(usage)?;
    let pairs = make_dataset(n, &cfg.synth, cfg.seed)?;
    write_dataset(out, &pairs, &cfg.synth, cfg.seed)?;
    log::info!("wrote {n} scenes to {}", out.display());
    Ok(())
}

fn load_training(path: &Path, limit: Option<usize>) -> Result<Dataset, CliError> {
    need_dir(path, "dataset")?;
    need_file(&path.join("dataset.json"), "dataset index")?;
    let mut ds = load_dataset(path)?;
    if let Some(l) = limit {
        if l == 0 {
            return Err(usage("--limit must be at least 1"));
        }
        ds.scenes.truncate(l);
    }
    Ok(ds)
}

/// Architecture fields a checkpoint fixes.
fn arch_mismatch(a: &GloConfig, b: &GloConfig) -> Option<String> {
    let pairs = [
        ("scene_latent", a.scene_latent, b.scene_latent),
        ("trans_latent", a.trans_latent, b.trans_latent),
        ("grid", a.grid, b.grid),
    ];
    for (name, x, y) in pairs {
        if x != y {
            return Some(format!("{name}: config {x}, checkpoint {y}"));
        }
    }
    if a.widths != b.widths {
        return Some(format!("widths: config {:?}, checkpoint {:?}", a.widths, b.widths));
    }
    if a.sigma_max != b.sigma_max || a.bounds != b.bounds {
        return Some("sigma_max or bounds differ".into());
    }
    None
}

pub fn cmd_train(loaded: &Loaded, cfg: &RunConfig, a: &TrainArgs, out: &Path) -> Result<(), CliError> {
    let mut glo = cfg.glo.clone();
    if let Some(e) = a.epochs {
        glo.epochs = e;
    }
    if let Some(g) = a.grid {
        glo.grid = g;
    }
    glo.validate().map_err(usage)?;
    let ds = load_training(&a.data, a.limit)?;

    let mut state = match &a.resume {
        Some(path) => {
            need_file(path, "checkpoint")?;
            let mut st = load_checkpoint(path)?;
            if loaded.has_glo || a.grid.is_some() {
                if let Some(m) = arch_mismatch(&glo, &st.config) {
                    return Err(usage(format!("checkpoint does not match the configuration ({m})")));
                }
            }
            if let Some(e) = a.epochs {
                st.config.epochs = e;
            }
            log::info!("resuming at epoch {} (step {})", st.epoch(), st.step);
            st
        }
        None => {
            let data = training_sets(&ds.scenes, &glo, cfg.seed);
            TrainState::new(&glo, data.len(), cfg.seed, dataset_hash(&data))?
        }
    };
    let data = training_sets(&ds.scenes, &state.config, state.seed);
    if a.resume.is_some() && dataset_hash(&data) != state.dataset_hash {
        return Err(usage("checkpoint was trained on a different dataset"));
    }
    create_dir(out)?;
    let opts = TrainOptions {
        epochs: Some(state.config.epochs),
        max_steps: a.max_steps,
        checkpoint_dir: Some(out.to_path_buf()),
        loss_csv: Some(out.join("loss.csv")),
    };
    let trace = train_with(&mut state, &data, &opts)?;
    write_metadata(&state, out.join("model.json"))?;
    if let (Some(f), Some(l)) = (trace.first(), trace.last()) {
        log::info!(
            "trained {} steps: loss {:.6e} at step {} -> {:.6e} at step {}",
            trace.len(),
            f.total(),
            f.step,
            l.total(),
            l.step
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct InferSummary {
    aspp_only: bool,
    acoustic_points: usize,
    pillars: usize,
    degenerate_pillars: usize,
    aspp_points: usize,
    trans_points: usize,
    scene_points: usize,
    threshold: f64,
    trace: Vec<LossParts>,
}

pub fn cmd_infer(loaded: &Loaded, cfg: &RunConfig, a: &InferArgs, out: &Path) -> Result<(), CliError> {
    let mut pcfg = cfg.pipeline.clone();
    if let Some(e) = a.epsilon {
        pcfg.aspp.epsilon = e;
    }
    if let Some(t) = a.threshold {
        pcfg.threshold = t;
    }
    pcfg.aspp_only |= a.aspp_only;
    pcfg.validate().map_err(usage)?;
    need_file(&a.manifest, "manifest")?;

    let state = match (&a.checkpoint, pcfg.aspp_only) {
        (_, true) => None,
        (Some(path), false) => {
            need_file(path, "checkpoint")?;
            let st = load_checkpoint(path)?;
            if loaded.has_glo {
                if let Some(m) = arch_mismatch(&cfg.glo, &st.config) {
                    return Err(usage(format!("checkpoint does not match the configuration ({m})")));
                }
            }
            if !(pcfg.threshold < st.config.sigma_max) {
                return Err(usage(format!(
                    "threshold {} must lie below sigma_max {}",
                    pcfg.threshold, st.config.sigma_max
                )));
            }
            Some(st)
        }
        (None, false) => return Err(usage("--checkpoint is required unless --aspp-only is set")),
    };
    // Inference settings come from the config file when it has a model
    // section, otherwise from the checkpoint.
    let glo = state.as_ref().map(|s| if loaded.has_glo { cfg.glo.clone() } else { s.config.clone() });

    let capture = load_manifest(&a.manifest)?;
    let model = state.as_ref().zip(glo.as_ref()).map(|(s, g)| (&s.model, g));
    let rec = reconstruct(&capture, model, &pcfg, cfg.seed)?;

    create_dir(out)?;
    let fmt = ply::Format::BinaryLittleEndian;
    rec.trans_cloud.write_ply(out.join("trans.ply"), fmt)?;
    rec.scene_cloud.write_ply(out.join("scene.ply"), fmt)?;
    rec.evidence.apc.points.write_ply(out.join("apc.ply"), fmt)?;
    rec.evidence.aspp.write_ply(out.join("aspp.ply"), fmt)?;
    if let Some(inf) = &rec.inference {
        inf.trans_field.write(out.join("trans_field.vgrid"))?;
        inf.scene_field.write(out.join("scene_field.vgrid"))?;
    }
    let summary = InferSummary {
        aspp_only: pcfg.aspp_only,
        acoustic_points: rec.evidence.apc.len(),
        pillars: rec.evidence.pillars.len(),
        degenerate_pillars: rec.evidence.pillars.iter().filter(|p| p.is_degenerate()).count(),
        aspp_points: rec.evidence.aspp.len(),
        trans_points: rec.trans_cloud.len(),
        scene_points: rec.scene_cloud.len(),
        threshold: pcfg.threshold,
        trace: rec.inference.map(|i| i.trace).unwrap_or_default(),
    };
    write_json(&out.join("infer.json"), &summary)?;
    log::info!(
        "{} transparent points, {} scene points written to {}",
        summary.trans_points,
        summary.scene_points,
        out.display()
    );
    Ok(())
}

fn parse_bounds(v: &[f64]) -> Result<Aabb, CliError> {
    Aabb::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5])).map_err(usage)
}

fn read_ground_truth(path: &Path, ecfg: &EvalConfig) -> Result<PointCloud, CliError> {
    let data = ply::read(path)?;
    Ok(if data.faces.is_empty() {
        data.cloud
    } else {
        let mesh = TriMesh {
            vertices: data.cloud.points,
            faces: data.faces,
        };
        GroundTruth::Mesh(&mesh).points(ecfg)?
    })
}

#[derive(Serialize)]
struct AblationFile<'a> {
    rows: &'a [AblationRow],
    mean_depth_only: f64,
    mean_aspp_only: f64,
    mean_vair: f64,
}

/// Side-by-side masked IOU of the three arms, one row per scene.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!("{:<12}  {:>10}  {:>10}  {:>10}\n", "scene", "depth-only", "ASPP-only", "VAIR");
    for r in rows {
        s += &format!(
            "{:<12}  {:>10.3}  {:>10.3}  {:>10.3}\n",
            scene_dir_name(r.scene),
            r.depth_only.iou_masked,
            r.aspp_only.iou_masked,
            r.vair.iou_masked
        );
    }
    let (d, a, v) = ablation_means(rows);
    s += &format!("{:<12}  {d:>10.3}  {a:>10.3}  {v:>10.3}\n", "average");
    s
}

pub fn cmd_eval(loaded: &Loaded, cfg: &RunConfig, a: &EvalArgs, out: Option<&Path>) -> Result<(), CliError> {
    let mut ecfg = cfg.eval.clone();
    ecfg.seed = cfg.seed;
    if ecfg.resolution == 0 {
        return Err(usage("eval resolution must be positive"));
    }
    if a.ablation {
        let data = a.data.as_deref().expect("clap enforces --data");
        let ckpt = a.checkpoint.as_deref().expect("clap enforces --checkpoint");
        let out = need_out(out)?;
        need_file(ckpt, "checkpoint")?;
        let ds = load_training(data, None)?;
        let state = load_checkpoint(ckpt)?;
        if loaded.has_glo {
            if let Some(m) = arch_mismatch(&cfg.glo, &state.config) {
                return Err(usage(format!("checkpoint does not match the configuration ({m})")));
            }
        }
        let glo = if loaded.has_glo { cfg.glo.clone() } else { state.config.clone() };
        let count = a.count.unwrap_or(ds.scenes.len().saturating_sub(a.first));
        let held = ds
            .scenes
            .get(a.first..a.first + count)
            .filter(|h| !h.is_empty())
            .ok_or_else(|| usage(format!("no scenes in {}..{}", a.first, a.first + count)))?;
        let mut acfg = AblationConfig {
            pipeline: cfg.pipeline.clone(),
            sim: cfg.sim.clone(),
            sweep: cfg.sweep,
            eval: ecfg,
        };
        if let Some(e) = a.epsilon {
            acfg.pipeline.aspp.epsilon = e;
        }
        if let Some(t) = a.threshold {
            acfg.pipeline.threshold = t;
        }
        acfg.pipeline.aspp_only = false;
        acfg.pipeline.validate().map_err(usage)?;
        acfg.sim.validate().map_err(usage)?;
        create_dir(out)?;
        let rows = held
            .iter()
            .map(|p| {
                let dir = out.join("captures").join(scene_dir_name(p.layout.index));
                ablate_scene(p, &state.model, &glo, &acfg, cfg.seed, &dir)
            })
            .collect::<vair_core::Result<Vec<_>>>()?;
        let (d, asp, v) = ablation_means(&rows);
        write_json(
            &out.join("ablation.json"),
            &AblationFile {
                rows: &rows,
                mean_depth_only: d,
                mean_aspp_only: asp,
                mean_vair: v,
            },
        )?;
        let table = ablation_table(&rows);
        std::fs::write(out.join("ablation.txt"), &table).map_err(|e| vair_core::Error::Io {
            path: out.join("ablation.txt"),
            source: e,
        })?;
        print!("{table}");
        return Ok(());
    }

    let (Some(pred), Some(gt)) = (&a.pred, &a.gt) else {
        return Err(usage("eval needs --pred and --gt, or --ablation"));
    };
    need_file(pred, "prediction")?;
    need_file(gt, "ground truth")?;
    let pred_cloud = PointCloud::read_ply(pred)?;
    let gt_cloud = read_ground_truth(gt, &ecfg)?;
    if gt_cloud.is_empty() {
        return Err(usage(format!("ground truth {} is empty", gt.display())));
    }
    let bounds = match &a.bounds {
        Some(b) => parse_bounds(b)?,
        None => default_bounds(&gt_cloud, ecfg.bounds_padding)?,
    };
    let report: MetricReport = evaluate(&pred_cloud, GroundTruth::Cloud(&gt_cloud), &bounds, &ecfg)?;
    let name = pred.file_stem().map_or("prediction".into(), |s| s.to_string_lossy().into_owned());
    let rows = [(name, report.clone())];
    let table = MetricTable { rows: &rows }.to_string();
    if let Some(out) = out {
        create_dir(out)?;
        write_json(&out.join("report.json"), &report)?;
        std::fs::write(out.join("report.txt"), &table).map_err(|e| vair_core::Error::Io {
            path: out.join("report.txt"),
            source: e,
        })?;
    }
    print!("{table}");
    Ok(())
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    need_file(path, what)?;
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{what} {}: {e}", path.display())))
}

pub fn cmd_sim(cfg: &RunConfig, a: &SimArgs, out: &Path) -> Result<(), CliError> {
    cfg.sim.validate().map_err(usage)?;
    let cap = match (&a.data, &a.scene) {
        (Some(data), None) => {
            let idx = a.index.expect("clap enforces --index");
            need_dir(data, "dataset")?;
            let ds = load_dataset(data)?;
            let pair = ds
                .scenes
                .iter()
                .find(|p| p.layout.index == idx)
                .ok_or_else(|| usage(format!("dataset has no scene {idx}")))?;
            if let Some(t) = &a.trajectory {
                let scene = AnalyticScene::from_pair(pair)?;
                let traj: Vec<StampedPose> = read_json_file(t, "trajectory")?;
                simulate_capture(&scene, &traj, &cfg.sim, cfg.seed, out)?
            } else {
                capture_pair(pair, &cfg.sim, &cfg.sweep, cfg.seed, out)?
            }
        }
        (None, Some(path)) => {
            let scene: AnalyticScene = read_json_file(path, "scene")?;
            scene.validate().map_err(usage)?;
            let traj = match &a.trajectory {
                Some(t) => read_json_file(t, "trajectory")?,
                None => sweep_all(&scene.glass, &scene.bounds, &cfg.sweep).map_err(usage)?,
            };
            simulate_capture(&scene, &traj, &cfg.sim, cfg.seed, out)?
        }
        _ => return Err(usage("sim needs --data with --index, or --scene")),
    };
    log::info!(
        "{} frames, {} pings; manifest at {}",
        cap.frames,
        cap.pings,
        cap.manifest.display()
    );
    Ok(())
}
