//! Supervised waypoint regression on the canonical rig.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{canonical_rig, CameraRig, Perturbation, RigConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    l2_error, perturbation_sweep, write_csv, AblationRow, EgoExtents, EvalSet, SweepResult,
};
use crate::geoprior::freeze_check;
use crate::numerics::{AdamW, AdamWConfig, Graph, Tensor};
use crate::planner::{DepthSource, PlannerConfig, PlannerModel, PreparedInput, Trajectory};
use crate::world::{make_dataset, parallel_map, DatasetSpec, Sample, SceneConfig};

/// Learning rate used by the full-scale reference setup.
pub const PAPER_LR: f64 = 5e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    /// Seeds parameter init and batch order.
    pub seed: u64,
    pub n_cameras: usize,
    pub rig: RigConfig,
    pub train: DatasetSpec,
    pub val: DatasetSpec,
    pub model: PlannerConfig,
    /// Stop after this many optimizer steps, if set.
    pub max_steps: Option<u64>,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let scene = SceneConfig::default();
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            base_lr: 1e-3,
            weight_decay: 0.01,
            seed: 0,
            n_cameras: 6,
            rig: RigConfig::default(),
            train: DatasetSpec {
                seed: 1,
                n_scenes: 400,
                scene: scene.clone(),
            },
            val: DatasetSpec {
                seed: 2,
                n_scenes: 100,
                scene,
            },
            model: PlannerConfig::default(),
            max_steps: None,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.base_lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if self.train.n_scenes == 0 {
            return Err(Error::Config("training set needs at least one scene".into()));
        }
        for spec in [&self.train, &self.val] {
            spec.scene.validate()?;
            if spec.scene.horizon != self.model.horizon || spec.scene.k_frames != self.model.k_frames {
                return Err(Error::Config(format!(
                    "dataset horizon/window ({}, {}) does not match model ({}, {})",
                    spec.scene.horizon, spec.scene.k_frames, self.model.horizon, self.model.k_frames
                )));
            }
        }
        self.model.validate()
    }

    pub fn hash(&self) -> String {
        // Worker count never changes results.
        let mut c = self.clone();
        c.workers = 1;
        crate::hashing::json_hash(&c)
    }

    pub fn training_rig(&self) -> Result<CameraRig> {
        canonical_rig(self.n_cameras, &self.rig)
    }

    fn model_config(&self) -> PlannerConfig {
        PlannerConfig {
            init_seed: self.seed,
            ..self.model.clone()
        }
    }
}

/// Mean over waypoints of the squared Euclidean distance.
pub fn loss(pred: &Trajectory, gt: &[[f64; 2]]) -> Result<f64> {
    if pred.len() != gt.len() || gt.is_empty() {
        return Err(Error::Contract(format!(
            "loss needs equal non-empty trajectories, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let total: f64 = pred
        .waypoints
        .iter()
        .zip(gt)
        .map(|(p, g)| (p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2))
        .sum();
    Ok(total / gt.len() as f64)
}

pub const CHECKPOINT_FORMAT: &str = "geoview-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: TrainConfig,
    pub config_hash: String,
    pub epoch: usize,
    pub step: u64,
    pub model: PlannerModel,
    pub optimizer: AdamW,
}

impl Checkpoint {
    fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("checkpoint serializes")
    }

    /// Content hash of the serialized checkpoint.
    pub fn hash(&self) -> String {
        crate::hashing::bytes_hash(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::format(path, format!("unknown checkpoint format {:?}", ck.format)));
        }
        let fresh = crate::geoprior::GeoPrior::new(ck.model.config.prior)?;
        if !freeze_check(&fresh, &ck.model.prior) {
            return Err(Error::format(path, "stored prior differs from its configuration"));
        }
        ck.optimizer.check_compatible(&ck.model.params)?;
        Ok(ck)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    pub final_train_l2: f64,
    pub final_val_l2: f64,
    pub steps: u64,
    pub param_count: usize,
    /// Not serialized, so saved reports stay byte-identical across reruns.
    #[serde(skip)]
    pub wall_time_s: f64,
    pub config_hash: String,
    pub train_dataset_hash: String,
    pub checkpoint_hash: String,
    /// Set when the smoothed loss curve rose at some point.
    pub loss_trend_warning: bool,
}

#[derive(Serialize)]
struct NanDump {
    step: u64,
    epoch: usize,
    batch: Vec<(usize, usize)>,
    losses: Vec<f64>,
    param_norms: Vec<(String, f64)>,
}

/// Parameter-independent inputs for every sample.
pub fn prepare_all(model: &PlannerModel, samples: &[Sample], workers: usize) -> Result<Vec<PreparedInput>> {
    parallel_map(samples.len(), workers, |i| model.prepare(&samples[i], None))
        .into_iter()
        .collect()
}

fn target_tensor(gt: &[[f64; 2]]) -> Tensor {
    Tensor::new(vec![1, 2 * gt.len()], gt.iter().flat_map(|p| [p[0], p[1]]).collect()).expect("target shape")
}

/// Mean L2 metric over prepared inputs.
pub fn mean_l2(model: &PlannerModel, inputs: &[PreparedInput], samples: &[Sample], workers: usize) -> Result<f64> {
    if inputs.is_empty() {
        return Ok(f64::NAN);
    }
    let errs: Vec<f64> = parallel_map(inputs.len(), workers, |i| {
        let t = model.forward_prepared(&inputs[i])?;
        l2_error(&t.waypoints, &samples[i].gt_waypoints)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

fn smoothed_rises(curve: &[f64]) -> bool {
    let mut ema = None::<f64>;
    let mut prev = f64::INFINITY;
    for &v in curve {
        let e = ema.map_or(v, |m| 0.7 * m + 0.3 * v);
        ema = Some(e);
        if e > prev * 1.0001 {
            return true;
        }
        prev = e;
    }
    false
}

/// Train on already-rendered samples. Writes epoch checkpoints into
/// `out_dir` when given.
pub fn train_on(
    cfg: &TrainConfig,
    rig: &CameraRig,
    train: &[Sample],
    val: &[Sample],
    out_dir: Option<&Path>,
) -> Result<(Checkpoint, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let start = Instant::now();
    let mut model = PlannerModel::new(cfg.model_config(), rig.clone())?;
    let prior_before = model.prior.clone();
    let train_in = prepare_all(&model, train, cfg.workers)?;
    let val_in = prepare_all(&model, val, cfg.workers)?;
    let targets: Vec<Tensor> = train.iter().map(|s| target_tensor(&s.gt_waypoints)).collect();

    let batches_per_epoch = train.len().div_ceil(cfg.batch_size) as u64;
    let mut total_steps = batches_per_epoch * cfg.epochs as u64;
    if let Some(m) = cfg.max_steps {
        total_steps = total_steps.min(m);
    }
    let mut opt = AdamW::new(
        AdamWConfig {
            base_lr: cfg.base_lr,
            weight_decay: cfg.weight_decay,
            total_steps,
            ..AdamWConfig::default()
        },
        &model.params,
    );
    let config_hash = cfg.hash();
    let horizon = model.config.horizon as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c4);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut epoch_done = 0;

    let checkpoint = |model: &PlannerModel, opt: &AdamW, epoch: usize| Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        config: cfg.clone(),
        config_hash: config_hash.clone(),
        epoch,
        step: opt.step,
        model: model.clone(),
        optimizer: opt.clone(),
    };

    'epochs: for epoch in 0..cfg.epochs {
        if opt.step >= total_steps {
            break;
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_n = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if opt.step >= total_steps {
                break 'epochs;
            }
            let mut g = Graph::new();
            let bound = model.params.bind(&mut g);
            let mut terms = Vec::with_capacity(batch.len());
            for &i in batch {
                let out = model.forward_graph(&mut g, &bound, &train_in[i])?;
                let t = g.constant(targets[i].clone());
                let d = g.sub(out, t)?;
                let sq = g.square(d);
                terms.push(g.sum(sq));
            }
            let losses: Vec<f64> = terms.iter().map(|v| g.value(*v).data()[0] / horizon).collect();
            let mut total = terms[0];
            for t in &terms[1..] {
                total = g.add(total, *t)?;
            }
            let batch_loss = g.scale(total, 1.0 / (horizon * batch.len() as f64));
            let value = g.value(batch_loss).data()[0];
            if !value.is_finite() {
                let dump = NanDump {
                    step: opt.step,
                    epoch,
                    batch: batch.iter().map(|&i| (train[i].scene_index, train[i].frame_index)).collect(),
                    losses,
                    param_norms: model
                        .params
                        .iter()
                        .map(|p| (p.name.clone(), p.value.data().iter().map(|v| v * v).sum::<f64>().sqrt()))
                        .collect(),
                };
                let text = serde_json::to_string_pretty(&dump).unwrap_or_default();
                if let Some(dir) = out_dir {
                    let p = dir.join("nan_dump.json");
                    std::fs::write(&p, &text).map_err(|e| Error::io(&p, e))?;
                }
                return Err(Error::NonFinite(format!(
                    "training loss became {value} at step {}; last batch: {text}",
                    opt.step
                )));
            }
            let grads = g.backward(batch_loss)?;
            model.params.zero_grads();
            model.params.accumulate(&bound, &grads);
            opt.step(&mut model.params)?;
            epoch_loss += value * batch.len() as f64;
            epoch_n += batch.len();
        }
        let mean = epoch_loss / epoch_n.max(1) as f64;
        loss_curve.push(mean);
        epoch_done = epoch + 1;
        log::info!("epoch {epoch_done}: loss {mean:.4} lr {:.2e}", opt.current_lr());
        if let Some(dir) = out_dir {
            let p = dir.join(format!("checkpoint_epoch{epoch_done:03}.json"));
            checkpoint(&model, &opt, epoch_done).save(&p)?;
        }
    }

    if !freeze_check(&prior_before, &model.prior) {
        return Err(Error::Contract("frozen prior changed during training".into()));
    }
    let final_train_l2 = mean_l2(&model, &train_in, train, cfg.workers)?;
    let final_val_l2 = mean_l2(&model, &val_in, val, cfg.workers)?;
    log::info!("train L2 {final_train_l2:.3} m, val L2 {final_val_l2:.3} m");
    let ck = checkpoint(&model, &opt, epoch_done);
    if let Some(dir) = out_dir {
        ck.save(&dir.join("checkpoint.json"))?;
        model.prior.save(&dir.join("prior.json"))?;
    }
    let warn = smoothed_rises(&loss_curve);
    if warn {
        log::warn!("smoothed training loss increased at some epoch");
    }
    let report = TrainReport {
        final_train_l2,
        final_val_l2,
        steps: opt.step,
        param_count: model.count_params(),
        wall_time_s: start.elapsed().as_secs_f64(),
        config_hash,
        train_dataset_hash: cfg.train.hash(),
        checkpoint_hash: ck.hash(),
        loss_trend_warning: warn,
        loss_curve,
    };
    Ok((ck, report))
}

/// Generate datasets from the config and train.
pub fn train(cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<(Checkpoint, TrainReport)> {
    cfg.validate()?;
    let rig = cfg.training_rig()?;
    let train = make_dataset(&cfg.train, &rig, cfg.workers)?;
    let val = if cfg.val.n_scenes > 0 {
        make_dataset(&cfg.val, &rig, cfg.workers)?.samples
    } else {
        Vec::new()
    };
    train_on(cfg, &rig, &train.samples, &val, out_dir)
}

/// One cell of the module ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub depth_source: DepthSource,
    pub gff: bool,
    pub report: TrainReport,
    pub sweep: SweepResult,
}

impl AblationCell {
    pub fn row(&self) -> AblationRow {
        let orig = self.sweep.original().expect("sweep has the original condition");
        AblationRow {
            depth_source: self.depth_source.to_string(),
            gff: self.gff,
            original_l2: orig.l2,
            perturbed_mean_l2: self.sweep.perturbed_mean_l2(),
            original_collision: orig.collision_rate,
            perturbed_mean_collision: self.sweep.perturbed_mean_collision(),
            dataset_hash: self.report.train_dataset_hash.clone(),
            checkpoint_hash: self.report.checkpoint_hash.clone(),
        }
    }
}

/// Train {oracle, heuristic} × {fusion on, off} on one shared dataset and
/// seed, sweep each, and write the ablation table into `out_dir`.
pub fn ablation_grid(
    base: &TrainConfig,
    eval: &EvalSet,
    out_dir: Option<&Path>,
) -> Result<Vec<AblationCell>> {
    base.validate()?;
    let rig = base.training_rig()?;
    let train = make_dataset(&base.train, &rig, base.workers)?;
    let val = if base.val.n_scenes > 0 {
        make_dataset(&base.val, &rig, base.workers)?.samples
    } else {
        Vec::new()
    };
    let mut cells = Vec::with_capacity(4);
    for depth_source in [DepthSource::Heuristic, DepthSource::Oracle] {
        for gff in [false, true] {
            let mut cfg = base.clone();
            cfg.model.depth_source = depth_source;
            cfg.model.fusion.enabled = gff;
            let name = format!("{depth_source}_{}", if gff { "gff" } else { "nogff" });
            let sub: Option<PathBuf> = out_dir.map(|d| d.join(&name));
            if let Some(d) = &sub {
                std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
            log::info!("ablation cell {name}");
            let (ck, report) = train_on(&cfg, &rig, &train.samples, &val, sub.as_deref())?;
            let sweep = perturbation_sweep(
                &ck.model,
                &report.checkpoint_hash,
                eval,
                &Perturbation::standard_conditions(),
                &EgoExtents {
                    length: base.train.scene.ego_length,
                    width: base.train.scene.ego_width,
                },
                base.workers,
            )?;
            cells.push(AblationCell {
                depth_source,
                gff,
                report,
                sweep,
            });
        }
    }
    if let Some(dir) = out_dir {
        let rows: Vec<AblationRow> = cells.iter().map(|c| c.row()).collect();
        write_csv(&dir.join("ablation_table.csv"), &rows)?;
    }
    Ok(cells)
}
