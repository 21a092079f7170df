//! The end-to-end waypoint planner.
//!
//! Pipeline per sample: linear embedding of intensity patches (averaged over
//! the temporal window), 3D positional embedding from the depth source and
//! the embedding rig, cross-attention to frozen prior features, a tokenwise
//! feed-forward layer, mean pooling, and a two-layer regression head.
//!
//! Everything that does not depend on learnable parameters is gathered by
//! [`PlannerModel::prepare`] so training can reuse it across epochs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraRig;
use crate::error::{Error, Result};
use crate::fusion::{fuse, AttentionParams, FusionConfig};
use crate::geoprior::{ground_plane_depth, GeoPrior, PriorConfig};
use crate::numerics::{Bound, Graph, ParamId, ParamSet, Tensor, Var};
use crate::patches::{PatchGrid, PatchReduce, TokenLayout};
use crate::spatial::{build_pointcloud, inject, spe_matrix, SpatialConfig, SpatialEncoder};
use crate::world::{DepthMap, Sample};

/// Where the spatial encoder's depth comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSource {
    /// The frozen prior's multi-view depth estimate.
    #[default]
    Oracle,
    /// Flat-ground guess from pixel rows at a fixed nominal camera height.
    Heuristic,
}

impl std::str::FromStr for DepthSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(DepthSource::Oracle),
            "heuristic" | "monocular" | "monocular-heuristic" => Ok(DepthSource::Heuristic),
            other => Err(Error::Config(format!("unknown depth source {other:?}"))),
        }
    }
}

impl std::fmt::Display for DepthSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DepthSource::Oracle => "oracle",
            DepthSource::Heuristic => "heuristic",
        })
    }
}

/// Which tokens enter the mean pool.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMask {
    #[default]
    All,
    /// Only tokens whose patch had finite depth.
    Geometry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub channels: usize,
    pub patch: usize,
    pub reduce: PatchReduce,
    pub z_far: f64,
    pub spatial: SpatialConfig,
    pub prior: PriorConfig,
    pub fusion: FusionConfig,
    pub depth_source: DepthSource,
    /// Camera height assumed by the heuristic depth source.
    pub nominal_height: f64,
    /// Tokenwise `GELU(x W + b)` before pooling.
    pub token_mlp: bool,
    pub pool: PoolMask,
    pub head_hidden: usize,
    pub horizon: usize,
    pub k_frames: usize,
    pub init_seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            channels: 32,
            patch: 8,
            reduce: PatchReduce::Centroid,
            z_far: 80.0,
            spatial: SpatialConfig::default(),
            prior: PriorConfig::default(),
            fusion: FusionConfig::default(),
            depth_source: DepthSource::Oracle,
            nominal_height: 1.5,
            token_mlp: true,
            pool: PoolMask::All,
            head_hidden: 64,
            horizon: 6,
            k_frames: 2,
            init_seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.head_hidden == 0 || self.horizon == 0 || self.k_frames == 0 {
            return Err(Error::Config(
                "channels, head_hidden, horizon and k_frames must be positive".into(),
            ));
        }
        if !(self.z_far > 0.0 && self.z_far.is_finite()) {
            return Err(Error::Config(format!("z_far must be positive, got {}", self.z_far)));
        }
        if !(self.nominal_height > 0.0) {
            return Err(Error::Config("nominal_height must be positive".into()));
        }
        if self.fusion.enabled && (self.fusion.heads == 0 || self.channels % self.fusion.heads != 0) {
            return Err(Error::Config(format!(
                "{} channels cannot be split into {} heads",
                self.channels, self.fusion.heads
            )));
        }
        self.spatial.spe.validate()
    }

    pub fn hash(&self) -> String {
        crate::hashing::json_hash(self)
    }
}

/// Predicted waypoints in the current ego frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<[f64; 2]>) -> Result<Self> {
        if waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory has non-finite waypoints".into()));
        }
        Ok(Trajectory { waypoints })
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerParts {
    pub patch_w: ParamId,
    pub patch_b: ParamId,
    pub spatial: SpatialEncoder,
    pub fusion: Option<AttentionParams>,
    pub token: Option<(ParamId, ParamId)>,
    pub head_w1: ParamId,
    pub head_b1: ParamId,
    pub head_w2: ParamId,
    pub head_b2: ParamId,
}

/// Parameter-independent inputs for one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedInput {
    /// `[tokens × patch²]` window-averaged intensity patches.
    pub patches: Tensor,
    /// `[tokens × encoding width]`
    pub encoding: Tensor,
    /// `[tokens × prior width]`
    pub prior: Tensor,
    /// `[1 × tokens]` pooling weights summing to one.
    pub pool: Tensor,
    pub cameras: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerModel {
    pub config: PlannerConfig,
    pub params: ParamSet,
    pub parts: PlannerParts,
    pub prior: GeoPrior,
    /// Rig the model was trained on; never modified after construction.
    training_rig: CameraRig,
    grid: PatchGrid,
}

impl PlannerModel {
    pub fn new(config: PlannerConfig, training_rig: CameraRig) -> Result<Self> {
        config.validate()?;
        training_rig.validate()?;
        let first = training_rig
            .cameras
            .first()
            .ok_or_else(|| Error::Config("training rig has no cameras".into()))?;
        let (w, h) = (first.intrinsics.width, first.intrinsics.height);
        if training_rig
            .cameras
            .iter()
            .any(|c| c.intrinsics.width != w || c.intrinsics.height != h)
        {
            return Err(Error::Config("all cameras must share one image size".into()));
        }
        let grid = PatchGrid::for_image(w, h, config.patch)?;
        let prior = GeoPrior::new(config.prior)?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = ParamSet::new();
        let c = config.channels;
        let p2 = config.patch * config.patch;
        let std = |fan_in: usize| (1.0 / fan_in as f64).sqrt();
        let patch_w = params.add_normal("patch.w", &[p2, c], std(p2), &mut rng);
        let patch_b = params.add_zeros("patch.b", &[c]);
        let spatial = SpatialEncoder::new(&mut params, config.spatial, c, &mut rng)?;
        let fusion = if config.fusion.enabled {
            Some(AttentionParams::new(
                &mut params,
                c,
                config.prior.feature_dim,
                config.fusion.heads,
                &mut rng,
            )?)
        } else {
            None
        };
        let token = if config.token_mlp {
            Some((
                params.add_normal("token.w", &[c, c], std(c), &mut rng),
                params.add_zeros("token.b", &[c]),
            ))
        } else {
            None
        };
        let hh = config.head_hidden;
        let out = 2 * config.horizon;
        let head_w1 = params.add_normal("head.w1", &[c, hh], std(c), &mut rng);
        let head_b1 = params.add_zeros("head.b1", &[hh]);
        let head_w2 = params.add_normal("head.w2", &[hh, out], std(hh), &mut rng);
        let head_b2 = params.add_zeros("head.b2", &[out]);
        let model = PlannerModel {
            config,
            params,
            parts: PlannerParts {
                patch_w,
                patch_b,
                spatial,
                fusion,
                token,
                head_w1,
                head_b1,
                head_w2,
                head_b2,
            },
            prior,
            training_rig,
            grid,
        };
        log::debug!("planner built with {} learnable scalars", model.count_params());
        Ok(model)
    }

    pub fn training_rig(&self) -> &CameraRig {
        &self.training_rig
    }

    pub fn grid(&self) -> PatchGrid {
        self.grid
    }

    pub fn layout(&self) -> TokenLayout {
        TokenLayout {
            grid: self.grid,
            reduce: self.config.reduce,
            z_far: self.config.z_far,
        }
    }

    /// Learnable scalars; the frozen prior is not included.
    pub fn count_params(&self) -> usize {
        self.params.scalar_count()
    }

    /// Closed-form learnable scalar count for a configuration.
    pub fn expected_param_count(config: &PlannerConfig) -> usize {
        let c = config.channels;
        let p2 = config.patch * config.patch;
        let hh = config.head_hidden;
        let out = 2 * config.horizon;
        let mut n = p2 * c + c + SpatialEncoder::param_count(&config.spatial, c);
        if config.fusion.enabled {
            n += AttentionParams::param_count(c, config.prior.feature_dim);
        }
        if config.token_mlp {
            n += c * c + c;
        }
        n + c * hh + hh + hh * out + out
    }

    fn check_sample(&self, sample: &Sample) -> Result<()> {
        if sample.frames.len() != self.config.k_frames {
            return Err(Error::Contract(format!(
                "sample has {} frames, model expects {}",
                sample.frames.len(),
                self.config.k_frames
            )));
        }
        if sample.rig.len() != self.training_rig.len() {
            return Err(Error::Contract(format!(
                "sample rig has {} cameras, model was built for {}",
                sample.rig.len(),
                self.training_rig.len()
            )));
        }
        let (w, h) = (self.grid.cols * self.grid.patch, self.grid.rows * self.grid.patch);
        for cam in &sample.rig.cameras {
            if cam.intrinsics.width != w || cam.intrinsics.height != h {
                return Err(Error::Contract(format!(
                    "camera {} is {}x{}, model expects {w}x{h}",
                    cam.name, cam.intrinsics.width, cam.intrinsics.height
                )));
            }
        }
        for f in &sample.frames {
            if f.cameras.len() != sample.rig.len() {
                return Err(Error::Contract(format!(
                    "frame {} has {} images for {} cameras",
                    f.frame_index,
                    f.cameras.len(),
                    sample.rig.len()
                )));
            }
            for img in &f.cameras {
                if img.intensity.width != w || img.intensity.height != h {
                    return Err(Error::Contract(format!(
                        "image {}x{} does not match {w}x{h}",
                        img.intensity.width, img.intensity.height
                    )));
                }
            }
        }
        if sample.gt_waypoints.len() != self.config.horizon {
            return Err(Error::Contract(format!(
                "sample has {} target waypoints, model predicts {}",
                sample.gt_waypoints.len(),
                self.config.horizon
            )));
        }
        Ok(())
    }

    fn patch_matrix(&self, sample: &Sample) -> Tensor {
        let g = self.grid;
        let p = g.patch;
        let cams = sample.rig.len();
        let n = cams * g.tokens();
        let mut data = vec![0.0; n * p * p];
        let inv_k = 1.0 / sample.frames.len() as f64;
        for frame in &sample.frames {
            for (ci, img) in frame.cameras.iter().enumerate() {
                for pr in 0..g.rows {
                    for pc in 0..g.cols {
                        let tok = ci * g.tokens() + pr * g.cols + pc;
                        let row = &mut data[tok * p * p..(tok + 1) * p * p];
                        for dr in 0..p {
                            for dc in 0..p {
                                row[dr * p + dc] += inv_k * img.intensity.at(pr * p + dr, pc * p + dc);
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![n, p * p], data).expect("patch matrix shape")
    }

    /// Gather the parameter-independent inputs. The prior always sees the
    /// rig that captured the images; `embedding_rig` (default: the same)
    /// only changes the positional embedding.
    pub fn prepare(&self, sample: &Sample, embedding_rig: Option<&CameraRig>) -> Result<PreparedInput> {
        self.check_sample(sample)?;
        let emb_rig = embedding_rig.unwrap_or(&sample.rig);
        if emb_rig.len() != sample.rig.len() {
            return Err(Error::Contract(format!(
                "embedding rig has {} cameras, sample has {}",
                emb_rig.len(),
                sample.rig.len()
            )));
        }
        let layout = self.layout();
        let current = sample.current();
        let prior = self.prior.estimate(current, &sample.rig, sample.scene_seed, &layout)?;
        let depth: Vec<DepthMap> = match self.config.depth_source {
            DepthSource::Oracle => prior.depth.clone(),
            DepthSource::Heuristic => sample
                .rig
                .cameras
                .iter()
                .map(|c| ground_plane_depth(&c.intrinsics, self.config.nominal_height))
                .collect(),
        };
        let points = build_pointcloud(&depth, emb_rig, &layout)?;
        let encoding = spe_matrix(&points.points, &self.config.spatial.spe);
        let n = points.points.len();
        let mask: Vec<f64> = match self.config.pool {
            PoolMask::All => vec![1.0; n],
            PoolMask::Geometry => points.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        };
        let total: f64 = mask.iter().sum();
        let pool = if total > 0.0 {
            mask.iter().map(|m| m / total).collect()
        } else {
            vec![1.0 / n as f64; n]
        };
        Ok(PreparedInput {
            patches: self.patch_matrix(sample),
            encoding,
            prior: prior.features,
            pool: Tensor::new(vec![1, n], pool)?,
            cameras: sample.rig.len(),
        })
    }

    /// Build the forward graph; returns the `[1 × 2T]` output.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bound, input: &PreparedInput) -> Result<Var> {
        self.forward_graph_with_attention(g, p, input).map(|(out, _)| out)
    }

    pub fn forward_graph_with_attention(
        &self,
        g: &mut Graph,
        p: &Bound,
        input: &PreparedInput,
    ) -> Result<(Var, Vec<Var>)> {
        let parts = &self.parts;
        let x = g.constant(input.patches.clone());
        let f = g.matmul(x, p.var(parts.patch_w))?;
        let f = g.add_bias(f, p.var(parts.patch_b))?;
        let enc = g.constant(input.encoding.clone());
        let e = parts.spatial.embed(g, p, enc)?;
        let f_hat = inject(g, f, e)?;
        let prior = g.constant(input.prior.clone());
        let fused = fuse(
            g,
            f_hat,
            prior,
            parts.fusion.as_ref(),
            p,
            &self.config.fusion,
            input.cameras,
        )?;
        let mut z = fused.features;
        if let Some((w, b)) = parts.token {
            let t = g.matmul(z, p.var(w))?;
            let t = g.add_bias(t, p.var(b))?;
            z = g.gelu(t);
        }
        let pool = g.constant(input.pool.clone());
        let pooled = g.matmul(pool, z)?;
        let h = g.matmul(pooled, p.var(parts.head_w1))?;
        let h = g.add_bias(h, p.var(parts.head_b1))?;
        let h = g.gelu(h);
        let o = g.matmul(h, p.var(parts.head_w2))?;
        Ok((g.add_bias(o, p.var(parts.head_b2))?, fused.attention))
    }

    pub fn forward_prepared(&self, input: &PreparedInput) -> Result<Trajectory> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let out = self.forward_graph(&mut g, &p, input)?;
        let v = g.value(out).data();
        Trajectory::new((0..self.config.horizon).map(|i| [v[2 * i], v[2 * i + 1]]).collect())
    }

    /// Predict waypoints. `embedding_rig_override` replaces the rig used for
    /// the positional embedding only.
    pub fn forward(&self, sample: &Sample, embedding_rig_override: Option<&CameraRig>) -> Result<Trajectory> {
        self.forward_prepared(&self.prepare(sample, embedding_rig_override)?)
    }

    /// Per-head attention maps for one sample, `[queries × keys]` each.
    pub fn attention_maps(&self, sample: &Sample, embedding_rig_override: Option<&CameraRig>) -> Result<Vec<Tensor>> {
        let input = self.prepare(sample, embedding_rig_override)?;
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let (_, maps) = self.forward_graph_with_attention(&mut g, &p, &input)?;
        Ok(maps.into_iter().map(|m| g.value(m).clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{canonical_rig, Camera, Extrinsics, Intrinsics, RigConfig};
    use crate::numerics::gradcheck::check_params;
    use crate::world::{generate_scene, render_scene_samples, SceneConfig};

    fn rig6() -> CameraRig {
        canonical_rig(6, &RigConfig::default()).unwrap()
    }

    fn sample_for(rig: &CameraRig, seed: u64) -> Sample {
        let scene = generate_scene(seed, &SceneConfig::default());
        render_scene_samples(&scene, 0, rig).remove(0)
    }

    #[test]
    fn zero_head_gives_zero_trajectory() {
        let mut m = PlannerModel::new(PlannerConfig::default(), rig6()).unwrap();
        for id in [m.parts.head_w2, m.parts.head_b2] {
            let shape = m.params.get(id).value.shape().to_vec();
            m.params.get_mut(id).value = Tensor::zeros(&shape);
        }
        for seed in 0..3 {
            let t = m.forward(&sample_for(&rig6(), seed), None).unwrap();
            assert_eq!(t.len(), 6);
            assert!(t.waypoints.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn override_with_own_rig_is_identity() {
        let m = PlannerModel::new(PlannerConfig::default(), rig6()).unwrap();
        let s = sample_for(&rig6(), 4);
        let a = m.forward(&s, None).unwrap();
        let b = m.forward(&s, Some(&s.rig.clone())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depth_only_changes_are_invisible_without_geometry_paths() {
        let cfg = PlannerConfig {
            fusion: FusionConfig {
                enabled: false,
                ..FusionConfig::default()
            },
            ..PlannerConfig::default()
        };
        let mut m = PlannerModel::new(cfg, rig6()).unwrap();
        let s = &m.parts.spatial;
        for id in [s.w1, s.b1, s.w2, s.b2] {
            let shape = m.params.get(id).value.shape().to_vec();
            m.params.get_mut(id).value = Tensor::zeros(&shape);
        }
        let sample = sample_for(&rig6(), 2);
        let mut moved = sample.clone();
        for f in &mut moved.frames {
            for img in &mut f.cameras {
                for z in &mut img.depth.data {
                    *z *= 1.7;
                }
            }
        }
        moved.scene_seed ^= 0xdead;
        let a = m.forward(&sample, None).unwrap();
        let b = m.forward(&moved, None).unwrap();
        assert_eq!(a, b);
        // The same perturbation is visible once the spatial encoder is live.
        let live = PlannerModel::new(PlannerConfig::default(), rig6()).unwrap();
        assert_ne!(live.forward(&sample, None).unwrap(), live.forward(&moved, None).unwrap());
    }

    #[test]
    fn camera_order_does_not_matter() {
        let m = PlannerModel::new(PlannerConfig::default(), rig6()).unwrap();
        let s = sample_for(&rig6(), 8);
        let perm = [3, 1, 5, 0, 2, 4];
        let mut p = s.clone();
        p.rig = CameraRig::new(perm.iter().map(|&i| s.rig.cameras[i].clone()).collect()).unwrap();
        for (f, src) in p.frames.iter_mut().zip(&s.frames) {
            f.cameras = perm.iter().map(|&i| src.cameras[i].clone()).collect();
        }
        let a = m.forward(&s, None).unwrap();
        let b = m.forward(&p, None).unwrap();
        for (x, y) in a.waypoints.iter().flatten().zip(b.waypoints.iter().flatten()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let m = PlannerModel::new(PlannerConfig::default(), rig6()).unwrap();
        let four = canonical_rig(4, &RigConfig::default()).unwrap();
        let s = sample_for(&four, 1);
        assert!(matches!(m.forward(&s, None), Err(Error::Contract(_))));
        let mut s = sample_for(&rig6(), 1);
        s.frames.pop();
        assert!(matches!(m.forward(&s, None), Err(Error::Contract(_))));
    }

    #[test]
    fn parameter_counts_match_closed_form() {
        for fusion in [true, false] {
            for token_mlp in [true, false] {
                let cfg = PlannerConfig {
                    fusion: FusionConfig {
                        enabled: fusion,
                        ..FusionConfig::default()
                    },
                    token_mlp,
                    ..PlannerConfig::default()
                };
                let a = PlannerModel::new(cfg.clone(), rig6()).unwrap();
                let b = PlannerModel::new(cfg.clone(), rig6()).unwrap();
                assert_eq!(a.count_params(), PlannerModel::expected_param_count(&cfg));
                assert_eq!(a.count_params(), b.count_params());
            }
        }
        // Head on a pool width of 8 with T = 6.
        let cfg = PlannerConfig {
            channels: 8,
            head_hidden: 10,
            fusion: FusionConfig {
                enabled: false,
                ..FusionConfig::default()
            },
            ..PlannerConfig::default()
        };
        let m = PlannerModel::new(cfg.clone(), rig6()).unwrap();
        let head: usize = ["head.w1", "head.b1", "head.w2", "head.b2"]
            .iter()
            .map(|n| m.params.get(m.params.by_name(n).unwrap()).value.len())
            .sum();
        assert_eq!(head, 8 * 10 + 10 + 10 * 12 + 12);

        // The frozen prior's width only matters through the key/value maps.
        let wide = |enabled: bool, cg: usize| {
            let mut c = PlannerConfig::default();
            c.fusion.enabled = enabled;
            c.prior.feature_dim = cg;
            PlannerModel::new(c, rig6()).unwrap().count_params()
        };
        assert_eq!(wide(false, 32), wide(false, 64));
        assert_eq!(wide(true, 64) - wide(true, 32), 2 * 32 * 32);
    }

    fn tiny_rig() -> CameraRig {
        let cam = |name: &str, yaw: f64| Camera {
            name: name.into(),
            intrinsics: Intrinsics::centered(16, 16),
            extrinsics: Extrinsics::from_yaw(yaw, [0.5, 0.0, 1.5]),
        };
        CameraRig::new(vec![cam("front", 0.0), cam("back", std::f64::consts::PI)]).unwrap()
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let cfg = PlannerConfig {
            channels: 8,
            patch: 4,
            head_hidden: 6,
            horizon: 2,
            k_frames: 1,
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
            k_frames: 1,
            ..SceneConfig::default()
        };
        let scene = generate_scene(3, &scene_cfg);
        let sample = render_scene_samples(&scene, 0, &rig).remove(0);
        let m = PlannerModel::new(cfg, rig).unwrap();
        assert_eq!(m.grid().tokens(), 16);
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
        assert_eq!(report.checked, m.count_params());
        assert!(report.passes(1e-4), "{report:?}");
    }
}
