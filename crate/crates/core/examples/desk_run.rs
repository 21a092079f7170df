//! Train one desk configuration and print its perturbation sweep and
//! replacement table.
//!
//! ```text
//! cargo run --release -p geoview-core --example desk_run -- [oracle|heuristic] [gff|nogff] [seed] [scenes] [epochs]
//! ```

use geoview::camera::Perturbation;
use geoview::evaluation::{counterfactual, perturbation_sweep, EgoExtents, EvalSet};
use geoview::planner::DepthSource;
use geoview::training::{train, TrainConfig};
use geoview::world::DatasetSpec;

fn main() -> geoview::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());

    let mut cfg = TrainConfig::default();
    cfg.model.depth_source = arg(0, "oracle").parse::<DepthSource>()?;
    cfg.model.fusion.enabled = arg(1, "gff") == "gff";
    cfg.seed = arg(2, "0").parse().expect("seed");
    cfg.train.n_scenes = arg(3, "400").parse().expect("scenes");
    cfg.epochs = arg(4, "30").parse().expect("epochs");
    cfg.train.seed = 1 + 10 * cfg.seed;

    let (ck, report) = train(&cfg, None)?;
    println!(
        "train L2 {:.3}  val L2 {:.3}  steps {}  params {}  {:.1}s",
        report.final_train_l2, report.final_val_l2, report.steps, report.param_count, report.wall_time_s
    );
    let eval = EvalSet::new(DatasetSpec {
        seed: 99,
        n_scenes: 100,
        scene: cfg.train.scene.clone(),
    })?;
    let ego = EgoExtents::default();
    let sweep = perturbation_sweep(&ck.model, &report.checkpoint_hash, &eval, &Perturbation::standard_conditions(), &ego, 1)?;
    for c in &sweep.conditions {
        println!("{:>12}  L2 {:.3}  col {:.3}", c.metrics.label, c.metrics.l2, c.metrics.collision_rate);
    }
    println!("perturbed mean L2 {:.3}", sweep.perturbed_mean_l2());
    let cf = counterfactual(
        &ck.model,
        &report.checkpoint_hash,
        &eval,
        &Perturbation::depth(1.0),
        &["none", "front_rear", "sides", "all"],
        &ego,
        1,
    )?;
    for r in &cf.rows {
        println!("replaced {:>10}  L2 {:.3}", r.set, r.metrics.l2);
    }
    Ok(())
}
