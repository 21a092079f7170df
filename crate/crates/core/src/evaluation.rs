//! Metrics, the perturbation sweep, counterfactual extrinsic replacement, and
//! report emission.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::{apply_perturbation, CameraRig, Perturbation};
use crate::error::{Error, Result};
use crate::planner::{PlannerModel, Trajectory};
use crate::world::{generate_scenes, parallel_map, render_samples, DatasetSpec, Sample, Scene};

/// Mean over the horizon of the Euclidean distance between waypoints.
pub fn l2_error(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<f64> {
    let per = l2_per_horizon(pred, gt)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Euclidean distance at every horizon step.
pub fn l2_per_horizon(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "cannot compare {} predicted with {} reference waypoints",
            pred.len(),
            gt.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt())
        .collect())
}

/// Ego footprint in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoExtents {
    pub length: f64,
    pub width: f64,
}

impl Default for EgoExtents {
    fn default() -> Self {
        EgoExtents {
            length: 4.0,
            width: 1.8,
        }
    }
}

/// World-frame ego poses `(x, y, heading)` along predicted waypoints given
/// in the ego frame of `frame`. Heading follows the segment from the
/// previous waypoint (the origin for the first one).
pub fn waypoint_poses(waypoints: &[[f64; 2]], scene: &Scene, frame: usize) -> Vec<(f64, f64, f64)> {
    let pose = scene.ego_pose(frame);
    let mut prev = [0.0, 0.0];
    let mut heading = 0.0;
    waypoints
        .iter()
        .map(|w| {
            let (dx, dy) = (w[0] - prev[0], w[1] - prev[1]);
            if dx.hypot(dy) > 1e-9 {
                heading = dy.atan2(dx);
            }
            prev = *w;
            let p = pose.to_world(&[w[0], w[1], 0.0]);
            (p[0], p[1], pose.heading + heading)
        })
        .collect()
}

/// Whether any waypoint's ego box overlaps any obstacle footprint. The
/// rotated box is replaced by its world-axis-aligned bound.
pub fn trajectory_collides(waypoints: &[[f64; 2]], scene: &Scene, frame: usize, ego: &EgoExtents) -> bool {
    waypoint_poses(waypoints, scene, frame).iter().any(|&(x, y, h)| {
        let (s, c) = h.sin_cos();
        let hx = 0.5 * (c.abs() * ego.length + s.abs() * ego.width);
        let hy = 0.5 * (s.abs() * ego.length + c.abs() * ego.width);
        scene
            .obstacles
            .iter()
            .any(|o| o.footprint_contains_inflated(x, y, hx, hy))
    })
}

/// Fraction of predictions whose trajectory collides.
pub fn collision_rate(cases: &[(&[[f64; 2]], &Scene, usize)], ego: &EgoExtents) -> f64 {
    if cases.is_empty() {
        return 0.0;
    }
    let hits = cases
        .iter()
        .filter(|(w, s, f)| trajectory_collides(w, s, *f, ego))
        .count();
    hits as f64 / cases.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub label: String,
    /// Mean over waypoints, then over samples.
    pub l2: f64,
    pub l2_per_horizon: Vec<f64>,
    /// Distance at the last waypoint, averaged over samples.
    pub l2_final: f64,
    pub collision_rate: f64,
    pub n_samples: usize,
}

/// One model prediction, enough to recompute every metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub scene_index: usize,
    pub frame_index: usize,
    pub waypoints: Vec<[f64; 2]>,
    pub target: Vec<[f64; 2]>,
}

/// Aggregate metrics from stored predictions in their given order.
pub fn metrics_from_predictions(
    label: &str,
    preds: &[Prediction],
    scenes: &[Scene],
    ego: &EgoExtents,
) -> Result<MetricResult> {
    if preds.is_empty() {
        return Err(Error::Contract(format!("no predictions for condition {label}")));
    }
    let horizon = preds[0].target.len();
    let mut per_h = vec![0.0; horizon];
    let mut l2 = 0.0;
    let mut cases = Vec::with_capacity(preds.len());
    for p in preds {
        let d = l2_per_horizon(&p.waypoints, &p.target)?;
        if d.len() != horizon {
            return Err(Error::Contract("predictions have mixed horizons".into()));
        }
        l2 += d.iter().sum::<f64>() / horizon as f64;
        for (acc, v) in per_h.iter_mut().zip(&d) {
            *acc += v;
        }
        let scene = scenes.get(p.scene_index).ok_or_else(|| {
            Error::Contract(format!("prediction refers to missing scene {}", p.scene_index))
        })?;
        cases.push((p.waypoints.as_slice(), scene, p.frame_index));
    }
    let n = preds.len() as f64;
    let per_h: Vec<f64> = per_h.iter().map(|v| v / n).collect();
    Ok(MetricResult {
        label: label.to_string(),
        l2: l2 / n,
        l2_final: *per_h.last().expect("non-empty horizon"),
        l2_per_horizon: per_h,
        collision_rate: collision_rate(&cases, ego),
        n_samples: preds.len(),
    })
}

/// Run the model on every sample, in order.
pub fn predict(
    model: &PlannerModel,
    samples: &[Sample],
    embedding_rig: Option<&CameraRig>,
    workers: usize,
) -> Result<Vec<Prediction>> {
    parallel_map(samples.len(), workers, |i| {
        let s = &samples[i];
        model.forward(s, embedding_rig).map(|t: Trajectory| Prediction {
            scene_index: s.scene_index,
            frame_index: s.frame_index,
            waypoints: t.waypoints,
            target: s.gt_waypoints.clone(),
        })
    })
    .into_iter()
    .collect()
}

/// Scenes used for evaluation, with the hash of their spec.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSet {
    pub spec: DatasetSpec,
    pub scenes: Vec<Scene>,
}

impl EvalSet {
    pub fn new(spec: DatasetSpec) -> Result<Self> {
        spec.scene.validate()?;
        if spec.n_scenes == 0 {
            return Err(Error::Config("evaluation needs at least one scene".into()));
        }
        let scenes = generate_scenes(&spec);
        Ok(EvalSet { spec, scenes })
    }

    pub fn hash(&self) -> String {
        self.spec.hash()
    }

    pub fn render(&self, rig: &CameraRig, workers: usize) -> Vec<Sample> {
        render_samples(&self.scenes, rig, self.spec.seed, workers)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub perturbation: Perturbation,
    pub metrics: MetricResult,
    pub predictions: Vec<Prediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub checkpoint_hash: String,
    pub dataset_hash: String,
    pub conditions: Vec<ConditionResult>,
}

impl SweepResult {
    pub fn condition(&self, label: &str) -> Option<&MetricResult> {
        self.conditions
            .iter()
            .map(|c| &c.metrics)
            .find(|m| m.label == label)
    }

    pub fn original(&self) -> Option<&MetricResult> {
        self.condition("original")
    }

    /// Mean L2 over every condition except the original one.
    pub fn perturbed_mean_l2(&self) -> f64 {
        let p: Vec<f64> = self
            .conditions
            .iter()
            .filter(|c| c.metrics.label != "original")
            .map(|c| c.metrics.l2)
            .collect();
        if p.is_empty() {
            f64::NAN
        } else {
            p.iter().sum::<f64>() / p.len() as f64
        }
    }

    pub fn perturbed_mean_collision(&self) -> f64 {
        let p: Vec<f64> = self
            .conditions
            .iter()
            .filter(|c| c.metrics.label != "original")
            .map(|c| c.metrics.collision_rate)
            .collect();
        if p.is_empty() {
            f64::NAN
        } else {
            p.iter().sum::<f64>() / p.len() as f64
        }
    }
}

/// Evaluate the model under each condition, re-rendering the same scenes
/// with the perturbed training rig.
pub fn perturbation_sweep(
    model: &PlannerModel,
    checkpoint_hash: &str,
    eval: &EvalSet,
    conditions: &[Perturbation],
    ego: &EgoExtents,
    workers: usize,
) -> Result<SweepResult> {
    let mut out = Vec::with_capacity(conditions.len());
    for pert in conditions {
        let rig = apply_perturbation(model.training_rig(), pert);
        let samples = eval.render(&rig, workers);
        let predictions = predict(model, &samples, None, workers)?;
        let metrics = metrics_from_predictions(&pert.label(), &predictions, &eval.scenes, ego)?;
        log::info!("{}: L2 {:.3} m, collision {:.3}", metrics.label, metrics.l2, metrics.collision_rate);
        out.push(ConditionResult {
            perturbation: *pert,
            metrics,
            predictions,
        });
    }
    Ok(SweepResult {
        checkpoint_hash: checkpoint_hash.to_string(),
        dataset_hash: eval.hash(),
        conditions: out,
    })
}

/// Resolve a named replacement set against a rig.
///
/// `none`, `front_rear`, `sides` (every camera other than front and back),
/// `all`, or an explicit `+`-separated list of camera names.
pub fn replacement_set(name: &str, rig: &CameraRig) -> Result<Vec<String>> {
    let names: Vec<String> = rig.names().iter().map(|s| s.to_string()).collect();
    let require = |n: &str| -> Result<String> {
        rig.index_of(n)
            .map(|_| n.to_string())
            .ok_or_else(|| Error::Config(format!("camera {n:?} is not in the rig")))
    };
    match name {
        "none" => Ok(Vec::new()),
        "all" => Ok(names),
        "front_rear" => Ok(vec![require("front")?, require("back")?]),
        "sides" => {
            require("front")?;
            require("back")?;
            Ok(names.into_iter().filter(|n| n != "front" && n != "back").collect())
        }
        list => list.split('+').map(|n| require(n.trim())).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplacementResult {
    pub set: String,
    pub cameras: Vec<String>,
    pub metrics: MetricResult,
    pub predictions: Vec<Prediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub checkpoint_hash: String,
    pub dataset_hash: String,
    pub perturbation: Perturbation,
    pub rows: Vec<ReplacementResult>,
}

impl CounterfactualResult {
    pub fn row(&self, set: &str) -> Option<&MetricResult> {
        self.rows.iter().find(|r| r.set == set).map(|r| &r.metrics)
    }
}

/// Render under the perturbed rig and, for each replacement set, compute
/// positional embeddings with training-time extrinsics for those cameras.
pub fn counterfactual(
    model: &PlannerModel,
    checkpoint_hash: &str,
    eval: &EvalSet,
    perturbation: &Perturbation,
    sets: &[&str],
    ego: &EgoExtents,
    workers: usize,
) -> Result<CounterfactualResult> {
    let train_rig = model.training_rig();
    let resolved: Vec<Vec<String>> = sets
        .iter()
        .map(|s| replacement_set(s, train_rig))
        .collect::<Result<_>>()?;
    let perturbed = apply_perturbation(train_rig, perturbation);
    let samples = eval.render(&perturbed, workers);
    let mut rows = Vec::with_capacity(sets.len());
    for (set, cameras) in sets.iter().zip(resolved) {
        let predictions = if cameras.is_empty() {
            predict(model, &samples, None, workers)?
        } else {
            let emb = perturbed.with_extrinsics_from(train_rig, &cameras)?;
            predict(model, &samples, Some(&emb), workers)?
        };
        let metrics = metrics_from_predictions(set, &predictions, &eval.scenes, ego)?;
        log::info!("replaced {set}: L2 {:.3} m", metrics.l2);
        rows.push(ReplacementResult {
            set: set.to_string(),
            cameras,
            metrics,
            predictions,
        });
    }
    Ok(CounterfactualResult {
        checkpoint_hash: checkpoint_hash.to_string(),
        dataset_hash: eval.hash(),
        perturbation: *perturbation,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Reports

/// Row of the per-condition table: one model under one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub model: String,
    pub condition: String,
    pub l2: f64,
    pub l2_final: f64,
    pub collision_rate: f64,
    pub n_samples: usize,
}

/// Row of the module ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub depth_source: String,
    pub gff: bool,
    pub original_l2: f64,
    pub perturbed_mean_l2: f64,
    pub original_collision: f64,
    pub perturbed_mean_collision: f64,
    pub dataset_hash: String,
    pub checkpoint_hash: String,
}

/// Row of the replacement table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplacementRow {
    pub replaced: String,
    pub cameras: String,
    pub l2: f64,
    pub collision_rate: f64,
    pub n_samples: usize,
}

pub fn condition_rows(model: &str, sweep: &SweepResult) -> Vec<ConditionRow> {
    sweep
        .conditions
        .iter()
        .map(|c| ConditionRow {
            model: model.to_string(),
            condition: c.metrics.label.clone(),
            l2: c.metrics.l2,
            l2_final: c.metrics.l2_final,
            collision_rate: c.metrics.collision_rate,
            n_samples: c.metrics.n_samples,
        })
        .collect()
}

pub fn replacement_rows(cf: &CounterfactualResult) -> Vec<ReplacementRow> {
    cf.rows
        .iter()
        .map(|r| ReplacementRow {
            replaced: r.set.clone(),
            cameras: r.cameras.join("+"),
            l2: r.metrics.l2,
            collision_rate: r.metrics.collision_rate,
            n_samples: r.metrics.n_samples,
        })
        .collect()
}

/// Write rows as CSV with a header; refuses to write an empty table.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Contract(format!("refusing to write empty table {}", path.display())));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(path, e.to_string())
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Horizontal-label bar chart of `(label, value)` pairs as standalone SVG.
pub fn bar_chart_svg(title: &str, y_label: &str, bars: &[(String, f64)]) -> Result<String> {
    if bars.is_empty() {
        return Err(Error::Contract(format!("bar chart {title:?} has no bars")));
    }
    if bars.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite(format!("bar chart {title:?} has a non-finite value")));
    }
    let (w, h) = (80 + 90 * bars.len(), 320);
    let (top, bottom, left) = (40.0, 260.0, 60.0);
    let max = bars.iter().map(|(_, v)| *v).fold(0.0f64, f64::max).max(1e-9);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    s += &format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        w / 2,
        xml_escape(title)
    );
    s += &format!(
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        xml_escape(y_label)
    );
    s += &format!(
        "<line x1=\"{left}\" y1=\"{bottom}\" x2=\"{}\" y2=\"{bottom}\" stroke=\"black\"/>\n",
        w - 10
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let bh = (bottom - top) * v / max;
        let x = left + 10.0 + 90.0 * i as f64;
        s += &format!(
            "<rect x=\"{x:.1}\" y=\"{:.2}\" width=\"70\" height=\"{bh:.2}\" fill=\"#4a78b0\"/>\n",
            bottom - bh
        );
        s += &format!(
            "<text x=\"{:.1}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\">{v:.3}</text>\n",
            x + 35.0,
            bottom - bh - 4.0
        );
        s += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n",
            x + 35.0,
            bottom + 16.0,
            xml_escape(label)
        );
    }
    s += "</svg>\n";
    Ok(s)
}

/// Everything the report command gathers, with provenance hashes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub sweeps: Vec<(String, SweepResult)>,
    pub counterfactuals: Vec<(String, CounterfactualResult)>,
    pub ablation: Vec<AblationRow>,
}

#[derive(Serialize)]
struct BundleSummary<'a> {
    sweeps: Vec<SweepSummary<'a>>,
    counterfactuals: Vec<CounterfactualSummary<'a>>,
    ablation: &'a [AblationRow],
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    model: &'a str,
    checkpoint_hash: &'a str,
    dataset_hash: &'a str,
    conditions: Vec<&'a MetricResult>,
}

#[derive(Serialize)]
struct CounterfactualSummary<'a> {
    model: &'a str,
    checkpoint_hash: &'a str,
    dataset_hash: &'a str,
    perturbation: String,
    rows: Vec<&'a MetricResult>,
}

/// Write tables, the JSON summary and plots into `dir`; returns the paths.
pub fn write_report(bundle: &ReportBundle, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    if bundle.sweeps.is_empty() && bundle.counterfactuals.is_empty() && bundle.ablation.is_empty() {
        return Err(Error::Contract("nothing to report".into()));
    }
    for (name, s) in &bundle.sweeps {
        if s.conditions.is_empty() {
            return Err(Error::Contract(format!("sweep {name} has no conditions")));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if !bundle.sweeps.is_empty() {
        let rows: Vec<ConditionRow> = bundle
            .sweeps
            .iter()
            .flat_map(|(name, s)| condition_rows(name, s))
            .collect();
        let p = dir.join("perturbation_table.csv");
        write_csv(&p, &rows)?;
        written.push(p);
        for (name, s) in &bundle.sweeps {
            let bars: Vec<(String, f64)> =
                s.conditions.iter().map(|c| (c.metrics.label.clone(), c.metrics.l2)).collect();
            let svg = bar_chart_svg(&format!("L2 per condition ({name})"), "L2 (m)", &bars)?;
            let p = dir.join(format!("l2_{name}.svg"));
            std::fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
    }
    if !bundle.counterfactuals.is_empty() {
        let mut rows = Vec::new();
        for (name, cf) in &bundle.counterfactuals {
            rows.extend(replacement_rows(cf).into_iter().map(|mut r| {
                if bundle.counterfactuals.len() > 1 {
                    r.replaced = format!("{name}:{}", r.replaced);
                }
                r
            }));
            let bars: Vec<(String, f64)> = cf.rows.iter().map(|r| (r.set.clone(), r.metrics.l2)).collect();
            let svg = bar_chart_svg(
                &format!("L2 under {} by replaced cameras ({name})", cf.perturbation),
                "L2 (m)",
                &bars,
            )?;
            let p = dir.join(format!("replacement_{name}.svg"));
            std::fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        let p = dir.join("replacement_table.csv");
        write_csv(&p, &rows)?;
        written.push(p);
    }
    if !bundle.ablation.is_empty() {
        let p = dir.join("ablation_table.csv");
        write_csv(&p, &bundle.ablation)?;
        written.push(p);
        let bars: Vec<(String, f64)> = bundle
            .ablation
            .iter()
            .map(|r| {
                (
                    format!("{}/{}", r.depth_source, if r.gff { "gff" } else { "no-gff" }),
                    r.perturbed_mean_l2,
                )
            })
            .collect();
        let svg = bar_chart_svg("Mean perturbed L2 by module", "L2 (m)", &bars)?;
        let p = dir.join("ablation.svg");
        std::fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    let summary = BundleSummary {
        sweeps: bundle
            .sweeps
            .iter()
            .map(|(m, s)| SweepSummary {
                model: m,
                checkpoint_hash: &s.checkpoint_hash,
                dataset_hash: &s.dataset_hash,
                conditions: s.conditions.iter().map(|c| &c.metrics).collect(),
            })
            .collect(),
        counterfactuals: bundle
            .counterfactuals
            .iter()
            .map(|(m, c)| CounterfactualSummary {
                model: m,
                checkpoint_hash: &c.checkpoint_hash,
                dataset_hash: &c.dataset_hash,
                perturbation: c.perturbation.label(),
                rows: c.rows.iter().map(|r| &r.metrics).collect(),
            })
            .collect(),
        ablation: &bundle.ablation,
    };
    let p = dir.join("report.json");
    let json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    std::fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}

/// Save any serializable result as pretty JSON.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_vec_pretty(value).expect("result serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}
