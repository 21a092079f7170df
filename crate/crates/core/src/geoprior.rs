//! Frozen geometric prior.
//!
//! A stand-in for a pretrained multi-view geometry network: it estimates
//! per-pixel depth (ground truth with multiplicative log-normal noise keyed
//! by scene, frame, camera and pixel), lifts each patch to an ego-frame point
//! with the rig that captured the images, and maps that point through a
//! fixed random projection of its sinusoidal encoding. Nothing in here is
//! ever trained.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraRig, Intrinsics};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::patches::{TokenLayout, TokenPoints};
use crate::spatial::{spe_matrix, SpeConfig};
use crate::world::{mix_seed, DepthMap, RenderedFrame};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Standard deviation of the log-depth noise.
    pub depth_noise_sigma: f64,
    pub encoding: SpeConfig,
    /// Output feature width.
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            depth_noise_sigma: 0.05,
            encoding: SpeConfig::default(),
            feature_dim: 32,
            seed: 7,
        }
    }
}

/// Depth, token points and features for one multi-camera frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorOutput {
    pub depth: Vec<DepthMap>,
    pub points: TokenPoints,
    /// `[tokens × feature_dim]`
    pub features: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPrior {
    pub config: PriorConfig,
    /// `[encoding width × feature_dim]`
    projection: Tensor,
}

#[derive(Serialize, Deserialize)]
struct PriorFile {
    config: PriorConfig,
    projection: Tensor,
    state_hash: String,
}

fn name_key(name: &str) -> u64 {
    // FNV-1a
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Standard normal draw that depends only on its key.
fn keyed_normal(key: u64) -> f64 {
    let a = mix_seed(key, 1);
    let b = mix_seed(key, 2);
    let u1 = ((a >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let u2 = (b >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl GeoPrior {
    pub fn new(config: PriorConfig) -> Result<Self> {
        config.encoding.validate()?;
        if config.feature_dim == 0 {
            return Err(Error::Config("prior feature width must be positive".into()));
        }
        if !(config.depth_noise_sigma >= 0.0 && config.depth_noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "depth noise sigma must be finite and non-negative, got {}",
                config.depth_noise_sigma
            )));
        }
        let d = config.encoding.width();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut ps = crate::numerics::ParamSet::new();
        let id = ps.add_normal("prior.projection", &[d, config.feature_dim], (1.0 / d as f64).sqrt(), &mut rng);
        let projection = ps.get(id).value.clone();
        Ok(GeoPrior { config, projection })
    }

    pub fn projection(&self) -> &Tensor {
        &self.projection
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    /// Noisy depth estimate for one camera image.
    pub fn estimate_depth(&self, depth: &DepthMap, scene_seed: u64, frame_index: usize, camera: &str) -> DepthMap {
        let sigma = self.config.depth_noise_sigma;
        let mut out = depth.clone();
        if sigma == 0.0 {
            return out;
        }
        let base = mix_seed(mix_seed(scene_seed, frame_index as u64), name_key(camera));
        for (i, z) in out.data.iter_mut().enumerate() {
            if z.is_finite() {
                *z *= (sigma * keyed_normal(mix_seed(base, i as u64))).exp();
            }
        }
        out
    }

    /// Run the prior on the current frame as captured by `rig`.
    pub fn estimate(
        &self,
        frame: &RenderedFrame,
        rig: &CameraRig,
        scene_seed: u64,
        layout: &TokenLayout,
    ) -> Result<PriorOutput> {
        if frame.cameras.len() != rig.len() {
            return Err(Error::Contract(format!(
                "prior got {} images for a {}-camera rig",
                frame.cameras.len(),
                rig.len()
            )));
        }
        let depth: Vec<DepthMap> = frame
            .cameras
            .iter()
            .zip(&rig.cameras)
            .map(|(img, cam)| self.estimate_depth(&img.depth, scene_seed, frame.frame_index, &cam.name))
            .collect();
        let points = layout.points(&depth, &rig.cameras)?;
        let features = self.features(&points.points)?;
        Ok(PriorOutput { depth, points, features })
    }

    /// Features for arbitrary ego-frame points.
    pub fn features(&self, points: &[crate::geom::Vec3]) -> Result<Tensor> {
        spe_matrix(points, &self.config.encoding).matmul(&self.projection)
    }

    /// SHA-256 over the exact bytes of the frozen state.
    pub fn state_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(8 * self.projection.len() + 64);
        bytes.extend(serde_json::to_vec(&self.config).expect("config serializes"));
        for v in self.projection.data() {
            bytes.extend(v.to_le_bytes());
        }
        crate::hashing::bytes_hash(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = PriorFile {
            config: self.config,
            projection: self.projection.clone(),
            state_hash: self.state_hash(),
        };
        let json = serde_json::to_vec_pretty(&file).expect("prior serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: PriorFile = serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
        let d = file.config.encoding.width();
        if file.projection.shape() != [d, file.config.feature_dim] {
            return Err(Error::format(
                path,
                format!("projection shape {:?} does not match config", file.projection.shape()),
            ));
        }
        let prior = GeoPrior {
            config: file.config,
            projection: file.projection,
        };
        if prior.state_hash() != file.state_hash {
            return Err(Error::format(path, "prior state hash mismatch"));
        }
        Ok(prior)
    }
}

/// True when two prior states are bit-identical.
pub fn freeze_check(before: &GeoPrior, after: &GeoPrior) -> bool {
    before.state_hash() == after.state_hash()
}

/// Image-only depth guess: every pixel below the horizon is assumed to see a
/// flat ground plane from a level camera at `nominal_height`; everything else
/// is at infinity. It ignores the actual rig, so it is wrong whenever the
/// camera's height or pitch differs from the assumption.
pub fn ground_plane_depth(intr: &Intrinsics, nominal_height: f64) -> DepthMap {
    let mut out = DepthMap::filled(intr.width, intr.height, f64::INFINITY);
    for row in 0..intr.height {
        let down = (row as f64 + 0.5 - intr.cy) / intr.fy;
        if down > 0.0 {
            let z = nominal_height / down;
            for col in 0..intr.width {
                out.set(row, col, z);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{canonical_rig, Camera, Extrinsics, RigConfig};
    use crate::patches::{PatchGrid, PatchReduce};
    use crate::world::{generate_scene, render_depth, SceneConfig};

    fn layout() -> TokenLayout {
        TokenLayout {
            grid: PatchGrid::for_image(56, 32, 8).unwrap(),
            reduce: PatchReduce::Centroid,
            z_far: 80.0,
        }
    }

    fn frame_for(rig: &CameraRig) -> RenderedFrame {
        let scene = generate_scene(11, &SceneConfig::default());
        render_depth(&scene, rig, &scene.ego_pose(1), 1)
    }

    #[test]
    fn deterministic_and_exact_without_noise() {
        let rig = canonical_rig(6, &RigConfig::default()).unwrap();
        let frame = frame_for(&rig);
        let p = GeoPrior::new(PriorConfig::default()).unwrap();
        let a = p.estimate(&frame, &rig, 5, &layout()).unwrap();
        let b = p.estimate(&frame, &rig, 5, &layout()).unwrap();
        assert_eq!(a, b);
        let c = p.estimate(&frame, &rig, 6, &layout()).unwrap();
        assert_ne!(a.depth, c.depth);

        let exact = GeoPrior::new(PriorConfig {
            depth_noise_sigma: 0.0,
            ..PriorConfig::default()
        })
        .unwrap();
        let e = exact.estimate(&frame, &rig, 5, &layout()).unwrap();
        for (est, img) in e.depth.iter().zip(&frame.cameras) {
            assert_eq!(est.data, img.depth.data);
        }
    }

    #[test]
    fn noise_has_requested_spread() {
        let p = GeoPrior::new(PriorConfig::default()).unwrap();
        let d = DepthMap::filled(56, 32, 10.0);
        let est = p.estimate_depth(&d, 1, 2, "front");
        let logs: Vec<f64> = est.data.iter().map(|z| (z / 10.0).ln()).collect();
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let sd = (logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((sd - 0.05).abs() < 0.005, "{sd}");
    }

    #[test]
    fn camera_count_mismatch_is_contract_error() {
        let rig = canonical_rig(6, &RigConfig::default()).unwrap();
        let four = canonical_rig(4, &RigConfig::default()).unwrap();
        let frame = frame_for(&rig);
        let p = GeoPrior::new(PriorConfig::default()).unwrap();
        assert!(matches!(p.estimate(&frame, &four, 0, &layout()), Err(Error::Contract(_))));
    }

    #[test]
    fn colocated_views_agree() {
        // Two cameras at the same pose see the same points, so with exact
        // depth their features agree; brute-force nearest-feature matching
        // then pairs each token with its twin.
        let cam = |name: &str| Camera {
            name: name.into(),
            intrinsics: Intrinsics::centered(56, 32),
            extrinsics: Extrinsics::from_yaw(0.3, [1.0, 0.0, 1.5]),
        };
        let rig = CameraRig::new(vec![cam("a"), cam("b")]).unwrap();
        let frame = frame_for(&rig);
        let p = GeoPrior::new(PriorConfig {
            depth_noise_sigma: 0.0,
            ..PriorConfig::default()
        })
        .unwrap();
        let out = p.estimate(&frame, &rig, 0, &layout()).unwrap();
        let (n, c) = out.features.dims2().unwrap();
        let half = n / 2;
        let row = |i: usize| out.features.data()[i * c..(i + 1) * c].to_vec();
        for i in 0..half {
            let a = row(i);
            let mut best = (f64::INFINITY, 0);
            for j in half..n {
                let b = row(j);
                let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            assert_eq!(best.0, 0.0);
            assert_eq!(out.points.points[i], out.points.points[best.1]);
        }
    }

    #[test]
    fn features_depend_only_on_geometry() {
        let p = GeoPrior::new(PriorConfig::default()).unwrap();
        let pts = [[3.0, 1.0, 0.0], [3.0, 1.0, 0.0], [3.0, 1.5, 0.0]];
        let f = p.features(&pts).unwrap();
        let c = f.shape()[1];
        assert_eq!(f.data()[..c], f.data()[c..2 * c]);
        assert_ne!(f.data()[..c], f.data()[2 * c..]);
    }

    #[test]
    fn save_load_and_freeze_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.json");
        let p = GeoPrior::new(PriorConfig::default()).unwrap();
        p.save(&path).unwrap();
        let q = GeoPrior::load(&path).unwrap();
        assert!(freeze_check(&p, &q));
        // Byte-level oracle.
        let bytes = |g: &GeoPrior| g.projection().data().iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>();
        assert_eq!(bytes(&p), bytes(&q));

        let mut r = q.clone();
        r.projection.data_mut()[0] = f64::from_bits(r.projection.data()[0].to_bits() ^ 1);
        assert!(!freeze_check(&p, &r));
        assert_ne!(bytes(&p), bytes(&r));

        let text = std::fs::read_to_string(&path).unwrap().replacen("0.05", "0.06", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(GeoPrior::load(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn ground_heuristic_matches_level_camera_at_nominal_height() {
        let rig = canonical_rig(6, &RigConfig::default()).unwrap();
        let scene = crate::world::Scene {
            seed: 0,
            obstacles: vec![],
            program: crate::world::EgoProgram::straight(2.0),
            horizon: 6,
            dt: 0.5,
            k_frames: 1,
            windows: 1,
        };
        let f = render_depth(&scene, &rig, &scene.ego_pose(0), 0);
        let h = ground_plane_depth(&rig.cameras[0].intrinsics, 1.5);
        for (a, b) in h.data.iter().zip(&f.cameras[0].depth.data) {
            if a.is_finite() || b.is_finite() {
                assert!((a - b).abs() < 1e-9 * a.max(1.0));
            }
        }
    }
}
