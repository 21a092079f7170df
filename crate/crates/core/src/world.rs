//! Procedural driving scenes, analytic depth rendering, and datasets.
//!
//! A scene is a flat ground plane (`z = 0`) with axis-aligned boxes. The ego
//! vehicle follows a noise-free motion program; route markers line both
//! sides of its path so the future trajectory is visible in the geometry.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraRig, Intrinsics};
use crate::error::{Error, Result};
use crate::geom::{self, Pose2, Vec3};

/// Row-major single-channel image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// Per-pixel camera-frame depth in meters; `+inf` where nothing is hit.
pub type DepthMap = Grid;

impl Grid {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }
}

/// Axis-aligned box in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec3,
    /// Full side lengths along x, y, z.
    pub extents: Vec3,
}

impl Obstacle {
    pub fn min(&self) -> Vec3 {
        [
            self.center[0] - 0.5 * self.extents[0],
            self.center[1] - 0.5 * self.extents[1],
            self.center[2] - 0.5 * self.extents[2],
        ]
    }

    pub fn max(&self) -> Vec3 {
        [
            self.center[0] + 0.5 * self.extents[0],
            self.center[1] + 0.5 * self.extents[1],
            self.center[2] + 0.5 * self.extents[2],
        ]
    }

    /// Ray parameter of the first intersection with `t > 0`, slab method.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let lo = self.min();
        let hi = self.max();
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < lo[a] || origin[a] > hi[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let (mut t0, mut t1) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
            if t_near > t_far {
                return None;
            }
        }
        if t_near > 0.0 {
            Some(t_near)
        } else if t_far > 0.0 {
            // Origin inside the box.
            Some(t_far)
        } else {
            None
        }
    }

    /// Unsigned distance from `p` to the box surface.
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        let lo = self.min();
        let hi = self.max();
        let mut outside = [0.0; 3];
        let mut inside_gap = f64::INFINITY;
        let mut is_inside = true;
        for a in 0..3 {
            if p[a] < lo[a] {
                outside[a] = lo[a] - p[a];
                is_inside = false;
            } else if p[a] > hi[a] {
                outside[a] = p[a] - hi[a];
                is_inside = false;
            } else {
                inside_gap = inside_gap.min((p[a] - lo[a]).min(hi[a] - p[a]));
            }
        }
        if is_inside {
            inside_gap
        } else {
            geom::norm(&outside)
        }
    }

    /// Whether the 2D footprint, grown by `(hx, hy)`, contains `(x, y)`.
    pub fn footprint_contains_inflated(&self, x: f64, y: f64, hx: f64, hy: f64) -> bool {
        (x - self.center[0]).abs() < 0.5 * self.extents[0] + hx
            && (y - self.center[1]).abs() < 0.5 * self.extents[1] + hy
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramKind {
    Straight,
    ArcLeft,
    ArcRight,
    LaneChange,
}

impl ProgramKind {
    pub const ALL: [ProgramKind; 4] = [
        ProgramKind::Straight,
        ProgramKind::ArcLeft,
        ProgramKind::ArcRight,
        ProgramKind::LaneChange,
    ];
}

/// Noise-free ego motion starting at the world origin with heading 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoProgram {
    pub kind: ProgramKind,
    /// m/s
    pub speed: f64,
    /// 1/m, magnitude; the sign comes from `kind`.
    pub curvature: f64,
    /// Signed lateral offset of a lane change, meters (+ is left).
    pub lane_offset: f64,
    /// Longitudinal start and length of the lane change, meters.
    pub lane_start: f64,
    pub lane_length: f64,
}

impl EgoProgram {
    pub fn straight(speed: f64) -> Self {
        EgoProgram {
            kind: ProgramKind::Straight,
            speed,
            curvature: 0.0,
            lane_offset: 0.0,
            lane_start: 0.0,
            lane_length: 1.0,
        }
    }

    pub fn arc(speed: f64, signed_curvature: f64) -> Self {
        EgoProgram {
            kind: if signed_curvature >= 0.0 {
                ProgramKind::ArcLeft
            } else {
                ProgramKind::ArcRight
            },
            speed,
            curvature: signed_curvature.abs(),
            lane_offset: 0.0,
            lane_start: 0.0,
            lane_length: 1.0,
        }
    }

    fn signed_curvature(&self) -> f64 {
        match self.kind {
            ProgramKind::ArcLeft => self.curvature,
            ProgramKind::ArcRight => -self.curvature,
            _ => 0.0,
        }
    }

    /// World pose at time `t` seconds.
    pub fn pose(&self, t: f64) -> Pose2 {
        let s = self.speed * t;
        match self.kind {
            ProgramKind::Straight => Pose2::new(s, 0.0, 0.0),
            ProgramKind::ArcLeft | ProgramKind::ArcRight => {
                let k = self.signed_curvature();
                if k == 0.0 {
                    return Pose2::new(s, 0.0, 0.0);
                }
                let th = k * s;
                Pose2::new(th.sin() / k, (1.0 - th.cos()) / k, th)
            }
            ProgramKind::LaneChange => {
                let x = s;
                let a = ((x - self.lane_start) / self.lane_length).clamp(0.0, 1.0);
                let pi = std::f64::consts::PI;
                let y = self.lane_offset * 0.5 * (1.0 - (pi * a).cos());
                let inside = x > self.lane_start && x < self.lane_start + self.lane_length;
                let dy = if inside {
                    self.lane_offset * 0.5 * pi / self.lane_length * (pi * a).sin()
                } else {
                    0.0
                };
                Pose2::new(x, y, dy.atan())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub programs: Vec<ProgramKind>,
    pub speed_range: (f64, f64),
    pub curvature_range: (f64, f64),
    pub lane_width: f64,
    /// Number of future waypoints.
    pub horizon: usize,
    /// Seconds between frames and between waypoints.
    pub dt: f64,
    /// Frames per temporal window.
    pub k_frames: usize,
    pub windows_per_scene: usize,
    pub route_markers: bool,
    pub corridor_half_width: f64,
    pub marker_spacing: f64,
    pub marker_size: Vec3,
    /// Box placed across the path just past the final waypoint.
    pub goal_marker: bool,
    pub distractors: (usize, usize),
    pub distractor_size: (f64, f64),
    pub distractor_height: (f64, f64),
    /// Sampling region for distractors, `(x_min, x_max, y_min, y_max)` in meters.
    pub region: (f64, f64, f64, f64),
    pub ego_length: f64,
    pub ego_width: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            programs: ProgramKind::ALL.to_vec(),
            speed_range: (2.0, 3.5),
            curvature_range: (0.03, 0.08),
            lane_width: 3.0,
            horizon: 6,
            dt: 0.5,
            k_frames: 2,
            windows_per_scene: 1,
            route_markers: true,
            corridor_half_width: 3.0,
            marker_spacing: 2.0,
            marker_size: [0.5, 0.5, 2.0],
            goal_marker: true,
            distractors: (0, 4),
            distractor_size: (0.8, 2.5),
            distractor_height: (0.8, 2.5),
            region: (-12.0, 25.0, -15.0, 15.0),
            ego_length: 4.0,
            ego_width: 1.8,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be > 0".into()));
        }
        if self.k_frames < 1 || self.windows_per_scene < 1 {
            return Err(Error::Config("k_frames and windows_per_scene must be >= 1".into()));
        }
        if self.programs.is_empty() {
            return Err(Error::Config("at least one ego program must be enabled".into()));
        }
        if self.speed_range.0 > self.speed_range.1 || self.curvature_range.0 > self.curvature_range.1 {
            return Err(Error::Config("empty sampling range".into()));
        }
        if self.distractors.0 > self.distractors.1 {
            return Err(Error::Config("empty distractor count range".into()));
        }
        Ok(())
    }

    /// Radius of the disc that contains the ego footprint at any heading.
    pub fn ego_clearance(&self) -> f64 {
        0.5 * self.ego_length.hypot(self.ego_width)
    }

    /// Index of the last frame any window of a scene can use as "current".
    fn last_current_frame(&self) -> usize {
        self.k_frames - 1 + self.windows_per_scene - 1
    }
}

/// A procedurally generated world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub obstacles: Vec<Obstacle>,
    pub program: EgoProgram,
    pub horizon: usize,
    pub dt: f64,
    pub k_frames: usize,
    pub windows: usize,
}

impl Scene {
    pub fn ego_pose(&self, frame: usize) -> Pose2 {
        self.program.pose(frame as f64 * self.dt)
    }

    /// Frame indices that serve as the current frame of a window.
    pub fn window_frames(&self) -> impl Iterator<Item = usize> {
        let first = self.k_frames - 1;
        first..first + self.windows
    }

    /// Future waypoints after `frame`, in that frame's ego coordinates.
    pub fn waypoints(&self, frame: usize) -> Vec<[f64; 2]> {
        let here = self.ego_pose(frame);
        (1..=self.horizon)
            .map(|j| {
                let p = self.ego_pose(frame + j);
                let l = here.to_local(&[p.x, p.y, 0.0]);
                [l[0], l[1]]
            })
            .collect()
    }

    /// Distance from a world point to the nearest scene surface.
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.surface_distance(p))
            .fold(p[2].abs(), f64::min)
    }
}

pub fn mix_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-scene seed derived from a dataset seed and the scene index.
pub fn scene_seed(dataset_seed: u64, index: usize) -> u64 {
    mix_seed(dataset_seed, index as u64)
}

/// Sample a scene; deterministic in `seed`.
pub fn generate_scene(seed: u64, cfg: &SceneConfig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = cfg.programs[rng.gen_range(0..cfg.programs.len())];
    let speed = sample_range(&mut rng, cfg.speed_range);
    let curvature = sample_range(&mut rng, cfg.curvature_range);
    let lane_sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let first_current = (cfg.k_frames - 1) as f64 * cfg.dt;
    let program = EgoProgram {
        kind,
        speed,
        curvature: match kind {
            ProgramKind::ArcLeft | ProgramKind::ArcRight => curvature,
            _ => 0.0,
        },
        lane_offset: if kind == ProgramKind::LaneChange {
            lane_sign * cfg.lane_width
        } else {
            0.0
        },
        lane_start: speed * first_current,
        lane_length: speed * cfg.horizon as f64 * cfg.dt,
    };

    // Path samples cover every pose the ego occupies in any window.
    let t_end = (cfg.last_current_frame() + cfg.horizon) as f64 * cfg.dt;
    let n_path = ((t_end / cfg.dt) * 8.0).ceil() as usize;
    let path: Vec<Pose2> = (0..=n_path)
        .map(|i| program.pose(t_end * i as f64 / n_path as f64))
        .collect();
    let clearance = cfg.ego_clearance() + 0.1;
    let clear_of_path = |o: &Obstacle| {
        path.iter()
            .all(|p| !o.footprint_contains_inflated(p.x, p.y, clearance, clearance))
    };

    let mut obstacles = Vec::new();
    if cfg.route_markers && cfg.marker_spacing > 0.0 {
        let length = speed * t_end;
        let count = (length / cfg.marker_spacing).floor() as usize;
        let half_h = 0.5 * cfg.marker_size[2];
        for m in 0..=count {
            let t = if count == 0 { t_end } else { t_end * (m as f64 * cfg.marker_spacing / length).min(1.0) };
            let p = program.pose(t);
            let (s, c) = p.heading.sin_cos();
            for side in [1.0, -1.0] {
                let off = side * cfg.corridor_half_width;
                let o = Obstacle {
                    center: [p.x - s * off, p.y + c * off, half_h],
                    extents: cfg.marker_size,
                };
                if clear_of_path(&o) {
                    obstacles.push(o);
                }
            }
        }
    }
    if cfg.goal_marker {
        let p = program.pose(t_end);
        let ahead = clearance + 0.5 * cfg.marker_size[0] + 0.3;
        let o = Obstacle {
            center: [
                p.x + ahead * p.heading.cos(),
                p.y + ahead * p.heading.sin(),
                0.5 * cfg.marker_size[2],
            ],
            extents: [cfg.marker_size[0], cfg.marker_size[0], cfg.marker_size[2]],
        };
        if clear_of_path(&o) {
            obstacles.push(o);
        }
    }

    let n_distractors = rng.gen_range(cfg.distractors.0..=cfg.distractors.1);
    let mut placed = 0;
    let mut attempts = 0;
    while placed < n_distractors && attempts < 200 {
        attempts += 1;
        let sx = sample_range(&mut rng, cfg.distractor_size);
        let sy = sample_range(&mut rng, cfg.distractor_size);
        let sz = sample_range(&mut rng, cfg.distractor_height);
        let x = sample_range(&mut rng, (cfg.region.0, cfg.region.1));
        let y = sample_range(&mut rng, (cfg.region.2, cfg.region.3));
        let o = Obstacle {
            center: [x, y, 0.5 * sz],
            extents: [sx, sy, sz],
        };
        if clear_of_path(&o) {
            obstacles.push(o);
            placed += 1;
        }
    }

    Scene {
        seed,
        obstacles,
        program,
        horizon: cfg.horizon,
        dt: cfg.dt,
        k_frames: cfg.k_frames,
        windows: cfg.windows_per_scene,
    }
}

fn sample_range<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// One camera's rendered output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraImage {
    pub depth: DepthMap,
    /// `min(1/depth, 1) + 0.5 · obstacle_mask`; zero for sky.
    pub intensity: Grid,
}

/// All cameras at one time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderedFrame {
    pub cameras: Vec<CameraImage>,
    pub frame_index: usize,
}

/// Intensity channel value for a hit at `depth`.
pub fn intensity_of(depth: f64, on_obstacle: bool) -> f64 {
    if !depth.is_finite() {
        return 0.0;
    }
    (1.0 / depth).clamp(0.0, 1.0) + if on_obstacle { 0.5 } else { 0.0 }
}

/// Ray-cast one camera from a world-frame camera pose.
pub fn render_camera(
    obstacles: &[Obstacle],
    intr: &Intrinsics,
    cam_rotation_world: &geom::Mat3,
    cam_origin_world: &Vec3,
) -> CameraImage {
    let (w, h) = (intr.width, intr.height);
    let mut depth = Grid::filled(w, h, f64::INFINITY);
    let mut intensity = Grid::filled(w, h, 0.0);
    for row in 0..h {
        for col in 0..w {
            let ray_cam = intr.ray(col as f64 + 0.5, row as f64 + 0.5);
            // z_cam of the ray is 1, so the ray parameter is camera depth.
            let dir = geom::mat_vec(cam_rotation_world, &ray_cam);
            let mut best = f64::INFINITY;
            let mut hit_obstacle = false;
            if dir[2] < 0.0 && cam_origin_world[2] > 0.0 {
                best = -cam_origin_world[2] / dir[2];
            }
            for o in obstacles {
                if let Some(t) = o.intersect(cam_origin_world, &dir) {
                    if t < best {
                        best = t;
                        hit_obstacle = true;
                    }
                }
            }
            depth.set(row, col, best);
            intensity.set(row, col, intensity_of(best, hit_obstacle));
        }
    }
    CameraImage { depth, intensity }
}

/// World-frame rotation and origin of every camera for an ego pose.
pub fn camera_world_poses(rig: &CameraRig, ego: &Pose2) -> Vec<(geom::Mat3, Vec3)> {
    let rz = ego.rotation();
    rig.cameras
        .iter()
        .map(|c| {
            (
                geom::mat_mul(&rz, &c.extrinsics.rotation),
                ego.to_world(&c.extrinsics.translation),
            )
        })
        .collect()
}

/// Render every camera of `rig` with the ego at `ego_pose`.
pub fn render_depth(scene: &Scene, rig: &CameraRig, ego_pose: &Pose2, frame_index: usize) -> RenderedFrame {
    let cameras = rig
        .cameras
        .iter()
        .zip(camera_world_poses(rig, ego_pose))
        .map(|(c, (rot, origin))| render_camera(&scene.obstacles, &c.intrinsics, &rot, &origin))
        .collect();
    RenderedFrame {
        cameras,
        frame_index,
    }
}

/// Model input for one time step: a temporal window plus supervision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Oldest first; the last frame is the current one.
    pub frames: Vec<RenderedFrame>,
    pub rig: CameraRig,
    /// `T × 2` meters in the current ego frame.
    pub gt_waypoints: Vec<[f64; 2]>,
    pub scene_index: usize,
    /// Seed of the source scene; keys per-pixel estimation noise.
    pub scene_seed: u64,
    pub frame_index: usize,
}

impl Sample {
    pub fn current(&self) -> &RenderedFrame {
        self.frames.last().expect("non-empty window")
    }
}

/// Render all windows of one scene.
pub fn render_scene_samples(scene: &Scene, scene_index: usize, rig: &CameraRig) -> Vec<Sample> {
    scene
        .window_frames()
        .map(|t| {
            let frames = (t + 1 - scene.k_frames..=t)
                .map(|f| render_depth(scene, rig, &scene.ego_pose(f), f))
                .collect();
            Sample {
                frames,
                rig: rig.clone(),
                gt_waypoints: scene.waypoints(t),
                scene_index,
                scene_seed: scene.seed,
                frame_index: t,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub seed: u64,
    pub n_scenes: usize,
    #[serde(default)]
    pub scene: SceneConfig,
}

impl DatasetSpec {
    pub fn hash(&self) -> String {
        crate::hashing::json_hash(self)
    }
}

/// Header stored with every dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub spec: DatasetSpec,
    pub spec_hash: String,
    pub rig: CameraRig,
    pub k_frames: usize,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub scenes: Vec<Scene>,
    pub samples: Vec<Sample>,
}

/// Generate the scenes of a dataset spec (no rendering).
pub fn generate_scenes(spec: &DatasetSpec) -> Vec<Scene> {
    (0..spec.n_scenes)
        .map(|i| generate_scene(scene_seed(spec.seed, i), &spec.scene))
        .collect()
}

/// Run `f` over `0..n` on up to `workers` threads, keeping index order.
pub fn parallel_map<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.max(1).min(n.max(1));
    if workers == 1 {
        return (0..n).map(&f).collect();
    }
    let chunk = n.div_ceil(workers);
    let f = &f;
    let mut parts: Vec<Vec<T>> = Vec::with_capacity(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    let lo = w * chunk;
                    let hi = ((w + 1) * chunk).min(n);
                    (lo..hi).map(f).collect::<Vec<T>>()
                })
            })
            .collect();
        for h in handles {
            parts.push(h.join().expect("worker panicked"));
        }
    });
    parts.into_iter().flatten().collect()
}

/// Render every window of every scene with `rig`, in scene order, then
/// shuffle deterministically by `shuffle_seed`.
pub fn render_samples(scenes: &[Scene], rig: &CameraRig, shuffle_seed: u64, workers: usize) -> Vec<Sample> {
    let per_scene = parallel_map(scenes.len(), workers, |i| render_scene_samples(&scenes[i], i, rig));
    let mut samples: Vec<Sample> = per_scene.into_iter().flatten().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(shuffle_seed, u64::MAX));
    samples.shuffle(&mut rng);
    samples
}

/// Generate and render a full dataset.
pub fn make_dataset(spec: &DatasetSpec, rig: &CameraRig, workers: usize) -> Result<Dataset> {
    spec.scene.validate()?;
    if spec.n_scenes < 1 {
        return Err(Error::Config("a dataset needs at least one scene".into()));
    }
    let scenes = generate_scenes(spec);
    let samples = render_samples(&scenes, rig, spec.seed, workers);
    Ok(Dataset {
        header: DatasetHeader {
            spec_hash: spec.hash(),
            spec: spec.clone(),
            rig: rig.clone(),
            k_frames: spec.scene.k_frames,
            horizon: spec.scene.horizon,
        },
        scenes,
        samples,
    })
}

const DATASET_MAGIC: &[u8; 4] = b"GVDS";
const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    scene_index: usize,
    frame_index: usize,
    frame_indices: Vec<usize>,
    gt_waypoints: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    header: DatasetHeader,
    scenes: Vec<Scene>,
    samples: Vec<SampleMeta>,
}

impl Dataset {
    /// Write the dataset: magic, version, JSON header length and body, then
    /// every sample's depth and intensity maps as little-endian `f64`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = FileHeader {
            header: self.header.clone(),
            scenes: self.scenes.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| SampleMeta {
                    scene_index: s.scene_index,
                    frame_index: s.frame_index,
                    frame_indices: s.frames.iter().map(|f| f.frame_index).collect(),
                    gt_waypoints: s.gt_waypoints.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&meta).expect("header serializes");
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(DATASET_MAGIC).map_err(io)?;
        w.write_all(&DATASET_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&json).map_err(io)?;
        for s in &self.samples {
            for f in &s.frames {
                for c in &f.cameras {
                    for v in c.depth.data.iter().chain(&c.intensity.data) {
                        w.write_all(&v.to_le_bytes()).map_err(io)?;
                    }
                }
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = std::io::BufReader::new(file);
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::format(path, "not a dataset file"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io)?;
        let version = u32::from_le_bytes(b4);
        if version != DATASET_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io)?;
        let len = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(io)?;
        let meta: FileHeader =
            serde_json::from_slice(&json).map_err(|e| Error::format(path, e.to_string()))?;
        let rig = meta.header.rig.clone();
        let mut samples = Vec::with_capacity(meta.samples.len());
        for sm in meta.samples {
            let mut frames = Vec::with_capacity(sm.frame_indices.len());
            for fi in sm.frame_indices {
                let mut cameras = Vec::with_capacity(rig.len());
                for cam in &rig.cameras {
                    let (w, h) = (cam.intrinsics.width, cam.intrinsics.height);
                    let mut read_grid = || -> Result<Grid> {
                        let mut data = Vec::with_capacity(w * h);
                        for _ in 0..w * h {
                            r.read_exact(&mut b8).map_err(io)?;
                            data.push(f64::from_le_bytes(b8));
                        }
                        Ok(Grid {
                            width: w,
                            height: h,
                            data,
                        })
                    };
                    let depth = read_grid()?;
                    let intensity = read_grid()?;
                    cameras.push(CameraImage { depth, intensity });
                }
                frames.push(RenderedFrame {
                    cameras,
                    frame_index: fi,
                });
            }
            samples.push(Sample {
                frames,
                rig: rig.clone(),
                gt_waypoints: sm.gt_waypoints,
                scene_index: sm.scene_index,
                scene_seed: meta.scenes.get(sm.scene_index).map_or(0, |s| s.seed),
                frame_index: sm.frame_index,
            });
        }
        Ok(Dataset {
            header: meta.header,
            scenes: meta.scenes,
            samples,
        })
    }
}
