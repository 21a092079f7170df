#![allow(dead_code)]

use geoview::camera::{canonical_rig, unproject, project, Camera, CameraRig, Extrinsics, Intrinsics, RigConfig};
use geoview::fusion::FusionConfig;
use geoview::geom::{self, Vec3};
use geoview::geoprior::PriorConfig;
use geoview::numerics::gradcheck::{check_inputs, check_params, GradCheckReport};
use geoview::numerics::{Graph, Tensor, Var};
use geoview::planner::{PlannerConfig, PlannerModel};
use geoview::spatial::SpatialConfig;
use geoview::world::{generate_scene, render_scene_samples, SceneConfig};
use geoview::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

/// Contract an output of any shape to a scalar with fixed, non-uniform
/// weights so that every output element matters.
pub fn weighted_sum(g: &mut Graph, y: Var) -> Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| (0.7 * i as f64 + 0.3).sin() + 0.1).collect())?;
    let w = g.constant(w);
    let m = g.mul(y, w)?;
    Ok(g.sum(m))
}

pub type OpFn = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

/// One entry per differentiable graph operation.
pub fn op_cases() -> Vec<(&'static str, Vec<Tensor>, OpFn)> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut t = |s: &[usize]| random_tensor(&mut rng, s);
    vec![
        ("matmul", vec![t(&[3, 4]), t(&[4, 2])], Box::new(|g, v| {
            let y = g.matmul(v[0], v[1])?;
            weighted_sum(g, y)
        })),
        ("matmul_nt", vec![t(&[3, 4]), t(&[5, 4])], Box::new(|g, v| {
            let y = g.matmul_nt(v[0], v[1])?;
            weighted_sum(g, y)
        })),
        ("add", vec![t(&[3, 4]), t(&[3, 4])], Box::new(|g, v| {
            let y = g.add(v[0], v[1])?;
            weighted_sum(g, y)
        })),
        ("sub", vec![t(&[3, 4]), t(&[3, 4])], Box::new(|g, v| {
            let y = g.sub(v[0], v[1])?;
            weighted_sum(g, y)
        })),
        ("mul", vec![t(&[3, 4]), t(&[3, 4])], Box::new(|g, v| {
            let y = g.mul(v[0], v[1])?;
            weighted_sum(g, y)
        })),
        ("add_bias", vec![t(&[3, 4]), t(&[4])], Box::new(|g, v| {
            let y = g.add_bias(v[0], v[1])?;
            weighted_sum(g, y)
        })),
        ("scale", vec![t(&[2, 3])], Box::new(|g, v| {
            let y = g.scale(v[0], -2.5);
            weighted_sum(g, y)
        })),
        ("gelu", vec![t(&[3, 5])], Box::new(|g, v| {
            let y = g.gelu(v[0]);
            weighted_sum(g, y)
        })),
        ("tanh", vec![t(&[3, 5])], Box::new(|g, v| {
            let y = g.tanh(v[0]);
            weighted_sum(g, y)
        })),
        ("square", vec![t(&[3, 5])], Box::new(|g, v| {
            let y = g.square(v[0]);
            weighted_sum(g, y)
        })),
        ("softmax_rows", vec![t(&[3, 5])], Box::new(|g, v| {
            let y = g.softmax(v[0], 1)?;
            weighted_sum(g, y)
        })),
        ("softmax_cols", vec![t(&[3, 5])], Box::new(|g, v| {
            let y = g.softmax(v[0], 0)?;
            weighted_sum(g, y)
        })),
        ("transpose", vec![t(&[3, 5])], Box::new(|g, v| {
            let y = g.transpose(v[0])?;
            weighted_sum(g, y)
        })),
        ("slice_cols", vec![t(&[3, 6])], Box::new(|g, v| {
            let y = g.slice_cols(v[0], 2, 3)?;
            weighted_sum(g, y)
        })),
        ("concat_cols", vec![t(&[3, 2]), t(&[3, 4])], Box::new(|g, v| {
            let y = g.concat_cols(&[v[0], v[1]])?;
            weighted_sum(g, y)
        })),
        ("concat_rows", vec![t(&[2, 3]), t(&[4, 3])], Box::new(|g, v| {
            let y = g.concat_rows(&[v[0], v[1]])?;
            weighted_sum(g, y)
        })),
        ("reshape", vec![t(&[3, 4])], Box::new(|g, v| {
            let y = g.reshape(v[0], &[2, 6])?;
            weighted_sum(g, y)
        })),
        ("sum", vec![t(&[3, 4])], Box::new(|g, v| {
            let y = g.square(v[0]);
            Ok(g.sum(y))
        })),
        ("mean", vec![t(&[3, 4])], Box::new(|g, v| {
            let y = g.square(v[0]);
            Ok(g.mean(y))
        })),
        ("chain", vec![t(&[4, 3]), t(&[3, 3]), t(&[3])], Box::new(|g, v| {
            let h = g.matmul(v[0], v[1])?;
            let h = g.add_bias(h, v[2])?;
            let h = g.gelu(h);
            let a = g.softmax(h, 1)?;
            let y = g.matmul_nt(a, h)?;
            weighted_sum(g, y)
        })),
    ]
}

pub fn check_op(inputs: &[Tensor], f: &OpFn) -> GradCheckReport {
    check_inputs(inputs, 1e-5, f).unwrap()
}

pub fn tiny_rig() -> CameraRig {
    let cam = |name: &str, yaw: f64| Camera {
        name: name.into(),
        intrinsics: Intrinsics::centered(16, 16),
        extrinsics: Extrinsics::from_yaw(yaw, [0.5, 0.0, 1.5]),
    };
    CameraRig::new(vec![cam("front", 0.0), cam("back", std::f64::consts::PI)]).unwrap()
}

/// Finite-difference check over every parameter of a 2-camera planner with
/// 4×4 patches.
pub fn tiny_planner_check() -> (GradCheckReport, usize) {
    let cfg = PlannerConfig {
        channels: 8,
        patch: 4,
        head_hidden: 6,
        horizon: 2,
        k_frames: 2,
        spatial: SpatialConfig {
            hidden: 5,
            ..SpatialConfig::default()
        },
        prior: PriorConfig {
            feature_dim: 6,
            ..PriorConfig::default()
        },
        fusion: FusionConfig {
            heads: 2,
            ..FusionConfig::default()
        },
        ..PlannerConfig::default()
    };
    let rig = tiny_rig();
    let scene_cfg = SceneConfig {
        horizon: 2,
        k_frames: 2,
        ..SceneConfig::default()
    };
    let scene = generate_scene(5, &scene_cfg);
    let sample = render_scene_samples(&scene, 0, &rig).remove(0);
    let m = PlannerModel::new(cfg, rig).unwrap();
    let input = m.prepare(&sample, None).unwrap();
    let target = Tensor::new(vec![1, 4], vec![1.0, 0.2, 2.0, -0.3]).unwrap();
    let report = check_params(&m.params, 1e-4, |g, p| {
        let out = m.forward_graph(g, p, &input)?;
        let t = g.constant(target.clone());
        let d = g.sub(out, t)?;
        let sq = g.square(d);
        Ok(g.sum(sq))
    })
    .unwrap();
    (report, m.count_params())
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> geom::Mat3 {
    let z = geom::rot_z(rng.gen_range(-3.1..3.1));
    let y = geom::rot_y(rng.gen_range(-0.5..0.5));
    let x = geom::rot_x(rng.gen_range(-0.5..0.5));
    geom::mat_mul(&z, &geom::mat_mul(&y, &x))
}

/// Worst projection/unprojection round-trip error in meters over `n`
/// random points in front of each camera of the canonical rig.
pub fn round_trip_error(n: usize, seed: u64) -> f64 {
    let rig = canonical_rig(6, &RigConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for cam in &rig.cameras {
        let k = &cam.intrinsics;
        for _ in 0..n {
            let u = rng.gen_range(0.0..k.width as f64);
            let v = rng.gen_range(0.0..k.height as f64);
            let d = rng.gen_range(0.1..80.0);
            let p = unproject(k, &cam.extrinsics, u, v, d).unwrap();
            let (u2, v2, d2) = project(k, &cam.extrinsics, &p).unwrap();
            let q = unproject(k, &cam.extrinsics, u2, v2, d2).unwrap();
            worst = worst.max(geom::norm(&geom::sub(&p, &q)));
            worst = worst.max((d2 - d).abs());
        }
    }
    worst
}

/// Worst deviation between unprojecting with a rigidly moved rig and moving
/// the unprojected point.
pub fn rig_equivariance_error(trials: usize, seed: u64) -> f64 {
    let rig = canonical_rig(6, &RigConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let rot = random_rotation(&mut rng);
        let shift: Vec3 = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-2.0..2.0)];
        let moved = rig.transformed(&rot, &shift);
        for (a, b) in rig.cameras.iter().zip(&moved.cameras) {
            let u = rng.gen_range(0.0..a.intrinsics.width as f64);
            let v = rng.gen_range(0.0..a.intrinsics.height as f64);
            let d = rng.gen_range(0.5..60.0);
            let p = a.unproject(u, v, d).unwrap();
            let expected = geom::add(&geom::mat_vec(&rot, &p), &shift);
            let got = b.unproject(u, v, d).unwrap();
            worst = worst.max(geom::norm(&geom::sub(&expected, &got)));
        }
    }
    worst
}
