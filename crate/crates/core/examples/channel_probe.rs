//! Attribute perturbation damage to input channels by mixing prepared
//! inputs from original and perturbed renderings.

use geoview::camera::{apply_perturbation, Perturbation};
use geoview::evaluation::{l2_error, EvalSet};
use geoview::planner::{DepthSource, PreparedInput};
use geoview::training::{train, TrainConfig};
use geoview::world::DatasetSpec;

fn main() -> geoview::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let mut cfg = TrainConfig::default();
    cfg.model.depth_source = arg(0, "oracle").parse::<DepthSource>()?;
    cfg.model.fusion.enabled = arg(1, "gff") == "gff";
    cfg.train.n_scenes = arg(2, "400").parse().unwrap();
    cfg.epochs = arg(3, "30").parse().unwrap();
    let (ck, report) = train(&cfg, None)?;
    println!("val L2 {:.3}", report.final_val_l2);
    let model = &ck.model;
    let eval = EvalSet::new(DatasetSpec { seed: 99, n_scenes: 60, scene: cfg.train.scene.clone() })?;
    let base = eval.render(model.training_rig(), 1);
    for pert in [Perturbation::height(1.0), Perturbation::depth(1.0), Perturbation::pitch(5.0)] {
        let rig = apply_perturbation(model.training_rig(), &pert);
        let moved = eval.render(&rig, 1);
        println!("{}", pert.label());
        for mask in 0..8u32 {
            let mut total = 0.0;
            for (a, b) in base.iter().zip(&moved) {
                let pa = model.prepare(a, None)?;
                let pb = model.prepare(b, None)?;
                let pick = |bit: u32| mask & bit != 0;
                let input = PreparedInput {
                    patches: if pick(1) { pb.patches.clone() } else { pa.patches.clone() },
                    encoding: if pick(2) { pb.encoding.clone() } else { pa.encoding.clone() },
                    prior: if pick(4) { pb.prior.clone() } else { pa.prior.clone() },
                    pool: pa.pool.clone(),
                    cameras: pa.cameras,
                };
                let t = model.forward_prepared(&input)?;
                total += l2_error(&t.waypoints, &a.gt_waypoints)?;
            }
            println!(
                "  perturbed: patches={} encoding={} prior={}  L2 {:.3}",
                mask & 1 != 0,
                mask & 2 != 0,
                mask & 4 != 0,
                total / base.len() as f64
            );
        }
    }
    Ok(())
}
