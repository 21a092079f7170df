use std::path::{Path, PathBuf};

use geoview::camera::{CameraRig, Perturbation};
use geoview::evaluation::{
    condition_rows, counterfactual, load_json, metrics_from_predictions, perturbation_sweep, predict,
    read_csv, replacement_rows, save_json, write_csv, write_report, AblationRow, CounterfactualResult,
    EvalSet, MetricResult, Prediction, ReportBundle, SweepResult,
};
use geoview::fusion::write_attention_csv;
use geoview::training::{ablation_grid, train_on, AblationCell, Checkpoint, TrainReport};
use geoview::world::{make_dataset, Dataset};
use geoview::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const TRAIN_DATA: &str = "train.gvds";
pub const VAL_DATA: &str = "val.gvds";
pub const EVAL_DATA: &str = "eval.gvds";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    All,
    Train,
    Val,
    Eval,
}

/// Render datasets and write the training rig.
pub fn generate(cfg: &RunConfig, split: Split, out: &Path) -> Result<Vec<PathBuf>> {
    let rig = cfg.train.training_rig()?;
    let mut written = Vec::new();
    let rig_path = out.join("rig.json");
    rig.save_json(&rig_path)?;
    written.push(rig_path);
    let jobs = [
        (Split::Train, &cfg.train.train, TRAIN_DATA),
        (Split::Val, &cfg.train.val, VAL_DATA),
        (Split::Eval, &cfg.eval, EVAL_DATA),
    ];
    for (which, spec, name) in jobs {
        if !(split == Split::All || split == which) || spec.n_scenes == 0 {
            continue;
        }
        let data = make_dataset(spec, &rig, cfg.workers())?;
        let p = out.join(name);
        data.save(&p)?;
        log::info!("{}: {} samples", p.display(), data.samples.len());
        written.push(p);
    }
    Ok(written)
}

fn load_matching(path: &Path, spec_hash: &str, rig: &CameraRig) -> Result<Dataset> {
    let data = Dataset::load(path)?;
    if data.header.spec_hash != spec_hash {
        return Err(Error::Config(format!(
            "{} was generated from a different dataset spec",
            path.display()
        )));
    }
    if &data.header.rig != rig {
        return Err(Error::Config(format!("{} was rendered with a different rig", path.display())));
    }
    Ok(data)
}

/// Train, reading pre-rendered datasets from `data` when given.
pub fn train(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> Result<Vec<PathBuf>> {
    let t = &cfg.train;
    let rig = t.training_rig()?;
    let (train_set, val_set) = match data {
        Some(dir) => {
            let tr = load_matching(&dir.join(TRAIN_DATA), &t.train.hash(), &rig)?;
            let va = if t.val.n_scenes > 0 {
                load_matching(&dir.join(VAL_DATA), &t.val.hash(), &rig)?.samples
            } else {
                Vec::new()
            };
            (tr.samples, va)
        }
        None => {
            let tr = make_dataset(&t.train, &rig, t.workers)?.samples;
            let va = if t.val.n_scenes > 0 {
                make_dataset(&t.val, &rig, t.workers)?.samples
            } else {
                Vec::new()
            };
            (tr, va)
        }
    };
    let (_, report) = train_on(t, &rig, &train_set, &val_set, Some(out))?;
    log::info!(
        "val L2 {:.3} m after {} steps ({:.1} s)",
        report.final_val_l2,
        report.steps,
        report.wall_time_s
    );
    let report_path = out.join("train_report.json");
    save_json(&report_path, &report)?;
    list_outputs(out)
}

/// Every file in `out` except the manifest, sorted.
fn list_outputs(out: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(out)
        .map_err(|e| Error::io(out, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != crate::manifest::MANIFEST_NAME))
        .collect();
    files.sort();
    Ok(files)
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String)> {
    let ck = Checkpoint::load(path)?;
    let hash = ck.hash();
    Ok((ck, hash))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub checkpoint_hash: String,
    pub dataset_hash: String,
    /// `training` or the path of the supplied rig file.
    pub rig: String,
    pub metrics: MetricResult,
    pub predictions: Vec<Prediction>,
}

/// Evaluate on the eval scenes with the training rig or a supplied one.
pub fn evaluate(
    cfg: &RunConfig,
    checkpoint: &Path,
    rig_file: Option<&Path>,
    attention_sample: Option<usize>,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let (ck, ck_hash) = load_checkpoint(checkpoint)?;
    let model = &ck.model;
    let (rig, rig_label) = match rig_file {
        Some(p) => (CameraRig::load_json(p)?, p.display().to_string()),
        None => (model.training_rig().clone(), "training".to_string()),
    };
    let eval = EvalSet::new(cfg.eval.clone())?;
    let samples = eval.render(&rig, cfg.workers());
    let predictions = predict(model, &samples, None, cfg.workers())?;
    let metrics = metrics_from_predictions(&rig_label, &predictions, &eval.scenes, &cfg.ego())?;
    log::info!("L2 {:.3} m, collision {:.3}", metrics.l2, metrics.collision_rate);
    let mut written = Vec::new();
    if let Some(i) = attention_sample {
        let sample = samples
            .get(i)
            .ok_or_else(|| Error::Config(format!("attention sample {i} out of range ({} samples)", samples.len())))?;
        if !model.config.fusion.enabled {
            return Err(Error::Config("attention maps need a model with fusion enabled".into()));
        }
        let maps = model.attention_maps(sample, None)?;
        let p = out.join(format!("attention_sample{i}.csv"));
        write_attention_csv(&p, &maps)?;
        written.push(p);
    }
    let p = out.join("eval.json");
    save_json(
        &p,
        &EvalOutput {
            checkpoint_hash: ck_hash,
            dataset_hash: eval.hash(),
            rig: rig_label,
            metrics,
            predictions,
        },
    )?;
    written.push(p);
    Ok(written)
}

pub fn sweep(cfg: &RunConfig, checkpoint: &Path, name: &str, out: &Path) -> Result<Vec<PathBuf>> {
    let (ck, ck_hash) = load_checkpoint(checkpoint)?;
    let eval = EvalSet::new(cfg.eval.clone())?;
    let result = perturbation_sweep(&ck.model, &ck_hash, &eval, &cfg.conditions, &cfg.ego(), cfg.workers())?;
    let json = out.join("sweep.json");
    save_json(&json, &result)?;
    let csv = out.join("perturbation_table.csv");
    write_csv(&csv, &condition_rows(name, &result))?;
    Ok(vec![json, csv])
}

pub fn counterfactual_cmd(
    cfg: &RunConfig,
    checkpoint: &Path,
    perturbation: Option<Perturbation>,
    sets: Option<Vec<String>>,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let (ck, ck_hash) = load_checkpoint(checkpoint)?;
    let eval = EvalSet::new(cfg.eval.clone())?;
    let pert = perturbation.unwrap_or(cfg.counterfactual.perturbation);
    let sets = sets.unwrap_or_else(|| cfg.counterfactual.sets.clone());
    if sets.is_empty() {
        return Err(Error::Config("no replacement sets given".into()));
    }
    let refs: Vec<&str> = sets.iter().map(String::as_str).collect();
    let result = counterfactual(&ck.model, &ck_hash, &eval, &pert, &refs, &cfg.ego(), cfg.workers())?;
    let json = out.join("counterfactual.json");
    save_json(&json, &result)?;
    let csv = out.join("replacement_table.csv");
    write_csv(&csv, &replacement_rows(&result))?;
    Ok(vec![json, csv])
}

fn cell_name(c: &AblationCell) -> String {
    format!("{}_{}", c.depth_source, if c.gff { "gff" } else { "nogff" })
}

pub fn ablate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let eval = EvalSet::new(cfg.eval.clone())?;
    let cells = ablation_grid(&cfg.train, &eval, Some(out))?;
    let mut written = vec![out.join("ablation_table.csv")];
    for c in &cells {
        let dir = out.join(cell_name(c));
        let p = dir.join("sweep.json");
        save_json(&p, &c.sweep)?;
        let r = dir.join("train_report.json");
        save_json(&r, &c.report)?;
        written.extend([dir.join("checkpoint.json"), p, r]);
    }
    let p = out.join("ablation.json");
    save_json(&p, &cells)?;
    written.push(p);
    Ok(written)
}

/// Collect sweeps, replacement studies and ablations from earlier output
/// directories and write tables, plots and a JSON summary.
pub fn report(inputs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let mut bundle = ReportBundle::default();
    for dir in inputs {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            ));
        }
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let mut found = false;
        let p = dir.join("sweep.json");
        if p.exists() {
            bundle.sweeps.push((name.clone(), load_json::<SweepResult>(&p)?));
            found = true;
        }
        let p = dir.join("counterfactual.json");
        if p.exists() {
            bundle.counterfactuals.push((name.clone(), load_json::<CounterfactualResult>(&p)?));
            found = true;
        }
        let p = dir.join("ablation.json");
        if p.exists() {
            let cells: Vec<AblationCell> = load_json(&p)?;
            for c in &cells {
                bundle.sweeps.push((cell_name(c), c.sweep.clone()));
                bundle.ablation.push(c.row());
            }
            found = true;
        } else {
            let p = dir.join("ablation_table.csv");
            if p.exists() {
                bundle.ablation.extend(read_csv::<AblationRow>(&p)?);
                found = true;
            }
        }
        let p = dir.join("train_report.json");
        if p.exists() {
            let r: TrainReport = load_json(&p)?;
            log::info!("{name}: final val L2 {:.3} m", r.final_val_l2);
            found = true;
        }
        if !found {
            return Err(Error::Contract(format!("{} holds no results to report", dir.display())));
        }
    }
    write_report(&bundle, out)
}
