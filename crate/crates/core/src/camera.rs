//! Pinhole cameras, surround rigs, and viewpoint perturbations.
//!
//! Conventions: the ego frame is x forward, y left, z up (FLU). The camera
//! frame is x right, y down, z along the optical axis (RDF). Extrinsics map
//! camera coordinates into the ego frame: `p_ego = R · p_cam + d`.
//! Pixel `(col, row)` has its center at `(col + 0.5, row + 0.5)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3};

/// Orthonormality tolerance for rotation matrices.
const ROTATION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Focal length `width / 2` on both axes with a centered principal point.
    pub fn centered(width: usize, height: usize) -> Self {
        Intrinsics {
            fx: width as f64 / 2.0,
            fy: width as f64 / 2.0,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::Config(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Viewing ray `K⁻¹ [u, v, 1]ᵀ` in camera coordinates (unit depth).
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= self.width as f64 && v <= self.height as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    /// Camera-to-ego rotation, row-major.
    pub rotation: Mat3,
    /// Camera origin in the ego frame, meters.
    pub translation: Vec3,
}

impl Extrinsics {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let e = Extrinsics {
            rotation,
            translation,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn identity() -> Self {
        Extrinsics {
            rotation: geom::IDENTITY,
            translation: [0.0; 3],
        }
    }

    /// Camera mounted at `position` looking along ego yaw `yaw` (radians)
    /// with zero pitch and roll.
    pub fn from_yaw(yaw: f64, position: Vec3) -> Self {
        let (s, c) = yaw.sin_cos();
        // Columns: camera x (right), y (down), z (forward) in ego coordinates.
        let right = [s, -c, 0.0];
        let down = [0.0, 0.0, -1.0];
        let forward = [c, s, 0.0];
        Extrinsics {
            rotation: [
                [right[0], down[0], forward[0]],
                [right[1], down[1], forward[1]],
                [right[2], down[2], forward[2]],
            ],
            translation: position,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = geom::orthonormality_error(&self.rotation);
        let det = geom::det(&self.rotation);
        if err > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::Config(format!(
                "rotation is not proper orthonormal (|RᵀR - I| = {err:e}, det = {det})"
            )));
        }
        Ok(())
    }

    /// Optical axis expressed in the ego frame.
    pub fn forward(&self) -> Vec3 {
        [self.rotation[0][2], self.rotation[1][2], self.rotation[2][2]]
    }

    pub fn cam_to_ego(&self, p_cam: &Vec3) -> Vec3 {
        geom::add(&geom::mat_vec(&self.rotation, p_cam), &self.translation)
    }

    pub fn ego_to_cam(&self, p_ego: &Vec3) -> Vec3 {
        geom::mat_t_vec(&self.rotation, &geom::sub(p_ego, &self.translation))
    }
}

/// Lift pixel `(u, v)` at camera-frame depth `depth` into the ego frame:
/// `p = R (K⁻¹ [u, v, 1]ᵀ · depth) + d`.
pub fn unproject(intr: &Intrinsics, extr: &Extrinsics, u: f64, v: f64, depth: f64) -> Result<Vec3> {
    if !(depth > 0.0) {
        return Err(Error::InvalidDepth(depth));
    }
    if !intr.contains(u, v) {
        return Err(Error::OutOfBounds {
            u,
            v,
            width: intr.width,
            height: intr.height,
        });
    }
    Ok(unproject_unchecked(intr, extr, u, v, depth))
}

pub(crate) fn unproject_unchecked(intr: &Intrinsics, extr: &Extrinsics, u: f64, v: f64, depth: f64) -> Vec3 {
    let ray = intr.ray(u, v);
    extr.cam_to_ego(&geom::scale(&ray, depth))
}

/// Project an ego-frame point to `(u, v, depth)`.
pub fn project(intr: &Intrinsics, extr: &Extrinsics, p: &Vec3) -> Result<(f64, f64, f64)> {
    let pc = extr.ego_to_cam(p);
    if !(pc[2] > 0.0) {
        return Err(Error::BehindCamera(pc[2]));
    }
    Ok((
        intr.fx * pc[0] / pc[2] + intr.cx,
        intr.fy * pc[1] / pc[2] + intr.cy,
        pc[2],
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub name: String,
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
}

impl Camera {
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        unproject(&self.intrinsics, &self.extrinsics, u, v, depth)
    }

    pub fn project(&self, p: &Vec3) -> Result<(f64, f64, f64)> {
        project(&self.intrinsics, &self.extrinsics, p)
    }
}

/// The full per-camera `(K, R, d)` configuration of a vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: Vec<Camera>,
}

/// Camera names for the six-camera surround layout, in rig order.
pub const SURROUND6: [&str; 6] = [
    "front",
    "front_left",
    "front_right",
    "back",
    "back_left",
    "back_right",
];

/// Camera names for the four-camera layout, in rig order.
pub const SURROUND4: [&str; 4] = ["front", "left", "back", "right"];

impl CameraRig {
    pub fn new(cameras: Vec<Camera>) -> Result<Self> {
        let rig = CameraRig { cameras };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.cameras.iter().enumerate() {
            c.intrinsics.validate()?;
            c.extrinsics.validate()?;
            if self.cameras[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Config(format!("duplicate camera name {}", c.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.cameras.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.cameras.iter().position(|c| c.name == name)
    }

    pub fn camera(&self, name: &str) -> Option<&Camera> {
        self.cameras.iter().find(|c| c.name == name)
    }

    /// Copy of `self` whose named cameras take their extrinsics from `source`.
    pub fn with_extrinsics_from(&self, source: &CameraRig, names: &[String]) -> Result<CameraRig> {
        let mut out = self.clone();
        for name in names {
            let src = source
                .camera(name)
                .ok_or_else(|| Error::Config(format!("camera {name} not in source rig")))?;
            let idx = out
                .index_of(name)
                .ok_or_else(|| Error::Config(format!("camera {name} not in rig")))?;
            out.cameras[idx].extrinsics = src.extrinsics;
        }
        Ok(out)
    }

    /// Apply the rigid ego-frame transform `p ↦ rot · p + shift` to every camera.
    pub fn transformed(&self, rot: &Mat3, shift: &Vec3) -> CameraRig {
        let mut out = self.clone();
        for c in &mut out.cameras {
            c.extrinsics.rotation = geom::mat_mul(rot, &c.extrinsics.rotation);
            c.extrinsics.translation = geom::add(&geom::mat_vec(rot, &c.extrinsics.translation), shift);
        }
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = RigFile {
            ego_xyz: "flu".into(),
            cam_xyz: "rdf".into(),
            cameras: self.cameras.clone(),
        };
        let text = serde_json::to_string_pretty(&file).expect("rig serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<CameraRig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: RigFile =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if file.ego_xyz != "flu" || file.cam_xyz != "rdf" {
            return Err(Error::format(
                path,
                format!(
                    "unsupported conventions ego_xyz={} cam_xyz={}",
                    file.ego_xyz, file.cam_xyz
                ),
            ));
        }
        CameraRig::new(file.cameras)
    }
}

/// Self-describing on-disk form of a [`CameraRig`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigFile {
    pub ego_xyz: String,
    pub cam_xyz: String,
    pub cameras: Vec<Camera>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub width: usize,
    pub height: usize,
    /// Mounting height above the ground plane, meters.
    pub mount_height: f64,
    /// Cameras sit on a horizontal ring of this radius around the ego origin.
    pub ring_radius: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            width: 56,
            height: 32,
            mount_height: 1.5,
            ring_radius: 1.0,
        }
    }
}

/// Deterministic surround rig with evenly distributed yaws and zero pitch.
pub fn canonical_rig(n_cameras: usize, cfg: &RigConfig) -> Result<CameraRig> {
    let layout: Vec<(&str, f64)> = match n_cameras {
        6 => vec![
            ("front", 0.0),
            ("front_left", 60.0),
            ("front_right", -60.0),
            ("back", 180.0),
            ("back_left", 120.0),
            ("back_right", -120.0),
        ],
        4 => vec![("front", 0.0), ("left", 90.0), ("back", 180.0), ("right", 270.0)],
        n => {
            return Err(Error::Config(format!(
                "unsupported camera count {n} (expected 4 or 6)"
            )))
        }
    };
    let intr = Intrinsics::centered(cfg.width, cfg.height);
    let cameras = layout
        .into_iter()
        .map(|(name, yaw_deg)| {
            let yaw = (yaw_deg as f64).to_radians();
            let pos = [
                cfg.ring_radius * yaw.cos(),
                cfg.ring_radius * yaw.sin(),
                cfg.mount_height,
            ];
            Camera {
                name: name.to_string(),
                intrinsics: intr,
                extrinsics: Extrinsics::from_yaw(yaw, pos),
            }
        })
        .collect();
    CameraRig::new(cameras)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Identity,
    Pitch,
    Height,
    Depth,
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "original" => Ok(PerturbationKind::Identity),
            "pitch" => Ok(PerturbationKind::Pitch),
            "height" => Ok(PerturbationKind::Height),
            "depth" => Ok(PerturbationKind::Depth),
            other => Err(Error::Config(format!("unknown perturbation kind {other:?}"))),
        }
    }
}

/// Direction used by depth perturbations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthAxis {
    /// Each camera moves along its own optical axis.
    #[default]
    Optical,
    /// Every camera moves along ego +x.
    EgoForward,
}

/// Test-time change of the camera rig.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    /// Degrees for pitch, meters otherwise. Ignored for identity.
    pub magnitude: f64,
    #[serde(default)]
    pub depth_axis: DepthAxis,
}

impl Perturbation {
    pub fn identity() -> Self {
        Perturbation {
            kind: PerturbationKind::Identity,
            magnitude: 0.0,
            depth_axis: DepthAxis::Optical,
        }
    }

    pub fn pitch(degrees: f64) -> Self {
        Perturbation {
            kind: PerturbationKind::Pitch,
            magnitude: degrees,
            depth_axis: DepthAxis::Optical,
        }
    }

    pub fn height(meters: f64) -> Self {
        Perturbation {
            kind: PerturbationKind::Height,
            magnitude: meters,
            depth_axis: DepthAxis::Optical,
        }
    }

    pub fn depth(meters: f64) -> Self {
        Perturbation {
            kind: PerturbationKind::Depth,
            magnitude: meters,
            depth_axis: DepthAxis::Optical,
        }
    }

    pub fn with_depth_axis(mut self, axis: DepthAxis) -> Self {
        self.depth_axis = axis;
        self
    }

    /// Short stable label, e.g. `pitch+5`, `height-0.7`, `original`.
    pub fn label(&self) -> String {
        match self.kind {
            PerturbationKind::Identity => "original".to_string(),
            PerturbationKind::Pitch => format!("pitch{:+}", self.magnitude),
            PerturbationKind::Height => format!("height{:+}", self.magnitude),
            PerturbationKind::Depth => format!("depth{:+}", self.magnitude),
        }
    }

    /// The original condition followed by the five evaluation perturbations.
    pub fn standard_conditions() -> Vec<Perturbation> {
        vec![
            Perturbation::identity(),
            Perturbation::pitch(5.0),
            Perturbation::pitch(-10.0),
            Perturbation::height(1.0),
            Perturbation::height(-0.7),
            Perturbation::depth(1.0),
        ]
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Perturbation {
    type Err = Error;

    /// Parses `original`, `identity`, or `<kind><signed magnitude>` such as
    /// `pitch-10`, `height+1.0`, `depth:+1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "original" || s == "identity" {
            return Ok(Perturbation::identity());
        }
        let split = s
            .find(|c: char| c == '+' || c == '-' || c == ':' || c.is_ascii_digit())
            .ok_or_else(|| Error::Config(format!("cannot parse perturbation {s:?}")))?;
        let kind: PerturbationKind = s[..split].parse()?;
        let mag_str = s[split..].trim_start_matches(':');
        let magnitude: f64 = mag_str
            .parse()
            .map_err(|_| Error::Config(format!("bad perturbation magnitude in {s:?}")))?;
        Ok(Perturbation {
            kind,
            magnitude,
            depth_axis: DepthAxis::Optical,
        })
    }
}

/// Return a perturbed copy of `rig`; intrinsics are never touched.
///
/// Positive pitch tilts every optical axis upward about the camera's own
/// lateral (x) axis.
pub fn apply_perturbation(rig: &CameraRig, pert: &Perturbation) -> CameraRig {
    let mut out = rig.clone();
    match pert.kind {
        PerturbationKind::Identity => {}
        PerturbationKind::Pitch => {
            let tilt = geom::rot_x(pert.magnitude.to_radians());
            for c in &mut out.cameras {
                c.extrinsics.rotation = geom::mat_mul(&c.extrinsics.rotation, &tilt);
            }
        }
        PerturbationKind::Height => {
            for c in &mut out.cameras {
                c.extrinsics.translation[2] += pert.magnitude;
            }
        }
        PerturbationKind::Depth => {
            for c in &mut out.cameras {
                let dir = match pert.depth_axis {
                    DepthAxis::Optical => c.extrinsics.forward(),
                    DepthAxis::EgoForward => [1.0, 0.0, 0.0],
                };
                c.extrinsics.translation =
                    geom::add(&c.extrinsics.translation, &geom::scale(&dir, pert.magnitude));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close3(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() < tol)
    }

    fn unit_intr() -> Intrinsics {
        Intrinsics {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            width: 4,
            height: 4,
        }
    }

    #[test]
    fn unproject_identity_camera_on_axis() {
        let p = unproject(&unit_intr(), &Extrinsics::identity(), 0.0, 0.0, 5.0).unwrap();
        assert_eq!(p, [0.0, 0.0, 5.0]);
    }

    #[test]
    fn unproject_offset_principal_point() {
        let intr = Intrinsics {
            fx: 2.0,
            fy: 2.0,
            cx: 3.0,
            cy: 2.0,
            width: 8,
            height: 8,
        };
        let extr = Extrinsics::new(geom::IDENTITY, [1.0, 0.0, 0.0]).unwrap();
        let p = unproject(&intr, &extr, 5.0, 4.0, 4.0).unwrap();
        // ray ((5-3)/2, (4-2)/2, 1) * 4 = (4, 4, 4), plus d.
        assert_eq!(p, [5.0, 4.0, 4.0]);
        let (u, v, z) = project(&intr, &extr, &p).unwrap();
        assert_eq!((u, v, z), (5.0, 4.0, 4.0));
    }

    #[test]
    fn unproject_rotated_camera() {
        let r = geom::rot_z(std::f64::consts::FRAC_PI_2);
        let extr = Extrinsics::new(r, [0.0; 3]).unwrap();
        let p = unproject(&unit_intr(), &extr, 0.0, 0.0, 5.0).unwrap();
        // Independent multiply of R by (0, 0, 5).
        let expected = [r[0][2] * 5.0, r[1][2] * 5.0, r[2][2] * 5.0];
        assert!(close3(&p, &expected, 1e-15));
        let (u, v, z) = project(&unit_intr(), &extr, &p).unwrap();
        assert!(u.abs() < 1e-12 && v.abs() < 1e-12 && (z - 5.0).abs() < 1e-12);
    }

    #[test]
    fn unproject_errors() {
        let e = Extrinsics::identity();
        assert!(matches!(
            unproject(&unit_intr(), &e, 0.0, 0.0, 0.0),
            Err(Error::InvalidDepth(_))
        ));
        assert!(matches!(
            unproject(&unit_intr(), &e, 0.0, 0.0, -1.0),
            Err(Error::InvalidDepth(_))
        ));
        assert!(matches!(
            unproject(&unit_intr(), &e, 9.0, 0.0, 1.0),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn project_behind_camera() {
        assert!(matches!(
            project(&unit_intr(), &Extrinsics::identity(), &[0.0, 0.0, -2.0]),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn principal_axis_projects_to_principal_point() {
        let intr = Intrinsics::centered(56, 32);
        let extr = Extrinsics::identity();
        let (u, v, z) = project(&intr, &extr, &[0.0, 0.0, 7.0]).unwrap();
        assert_eq!((u, v, z), (intr.cx, intr.cy, 7.0));
    }

    #[test]
    fn canonical_rig_layouts() {
        let cfg = RigConfig::default();
        let rig6 = canonical_rig(6, &cfg).unwrap();
        assert_eq!(rig6.names(), SURROUND6.to_vec());
        let yaw = |c: &Camera| {
            let f = c.extrinsics.forward();
            f[1].atan2(f[0]).to_degrees()
        };
        assert!(yaw(&rig6.cameras[0]).abs() < 1e-12);
        assert!((yaw(&rig6.cameras[1]) - 60.0).abs() < 1e-12);
        assert!((yaw(&rig6.cameras[2]) + 60.0).abs() < 1e-12);
        for c in &rig6.cameras {
            assert_eq!(c.extrinsics.translation[2], 1.5);
            assert!(c.extrinsics.forward()[2].abs() < 1e-15, "zero pitch");
            assert_eq!(c.intrinsics.fx, 28.0);
            assert_eq!(c.intrinsics.cx, 28.0);
            assert_eq!(c.intrinsics.cy, 16.0);
        }

        let rig4 = canonical_rig(4, &cfg).unwrap();
        let yaws: Vec<f64> = rig4
            .cameras
            .iter()
            .map(|c| yaw(c).rem_euclid(360.0).round())
            .collect();
        assert_eq!(yaws, vec![0.0, 90.0, 180.0, 270.0]);

        assert_eq!(canonical_rig(6, &cfg).unwrap(), rig6);
        assert!(matches!(canonical_rig(5, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn ego_frame_convention() {
        // Front camera: optical axis is ego +x, camera x (right) is ego -y,
        // camera y (down) is ego -z.
        let rig = canonical_rig(6, &RigConfig::default()).unwrap();
        let r = rig.cameras[0].extrinsics.rotation;
        assert_eq!([r[0][2], r[1][2], r[2][2]], [1.0, 0.0, 0.0]);
        assert!((r[1][0] + 1.0).abs() < 1e-15);
        assert_eq!(r[2][1], -1.0);
    }

    #[test]
    fn identity_perturbation_is_bit_identical() {
        let rig = canonical_rig(6, &RigConfig::default()).unwrap();
        assert_eq!(apply_perturbation(&rig, &Perturbation::identity()), rig);
    }

    #[test]
    fn height_perturbation_shifts_z_only() {
        let rig = canonical_rig(6, &RigConfig::default()).unwrap();
        let up = apply_perturbation(&rig, &Perturbation::height(1.0));
        for (a, b) in rig.cameras.iter().zip(&up.cameras) {
            assert_eq!(b.extrinsics.translation[2], a.extrinsics.translation[2] + 1.0);
            assert_eq!(b.extrinsics.translation[0], a.extrinsics.translation[0]);
            assert_eq!(b.extrinsics.rotation, a.extrinsics.rotation);
            assert_eq!(b.intrinsics, a.intrinsics);
        }
    }

    #[test]
    fn pitch_composes() {
        let rig = canonical_rig(6, &RigConfig::default()).unwrap();
        let twice = apply_perturbation(
            &apply_perturbation(&rig, &Perturbation::pitch(5.0)),
            &Perturbation::pitch(5.0),
        );
        let once = apply_perturbation(&rig, &Perturbation::pitch(10.0));
        for (a, b) in twice.cameras.iter().zip(&once.cameras) {
            for i in 0..3 {
                for j in 0..3 {
                    assert!((a.extrinsics.rotation[i][j] - b.extrinsics.rotation[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn positive_pitch_looks_up() {
        let rig = canonical_rig(6, &RigConfig::default()).unwrap();
        let up = apply_perturbation(&rig, &Perturbation::pitch(5.0));
        for c in &up.cameras {
            let f = c.extrinsics.forward();
            assert!((f[2] - 5f64.to_radians().sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_perturbation_moves_along_optical_axis() {
        let rig = canonical_rig(6, &RigConfig::default()).unwrap();
        let moved = apply_perturbation(&rig, &Perturbation::depth(1.0));
        for (a, b) in rig.cameras.iter().zip(&moved.cameras) {
            let delta = geom::sub(&b.extrinsics.translation, &a.extrinsics.translation);
            assert!(close3(&delta, &a.extrinsics.forward(), 1e-12));
        }
        let ego = apply_perturbation(
            &rig,
            &Perturbation::depth(1.0).with_depth_axis(DepthAxis::EgoForward),
        );
        for (a, b) in rig.cameras.iter().zip(&ego.cameras) {
            let delta = geom::sub(&b.extrinsics.translation, &a.extrinsics.translation);
            assert!(close3(&delta, &[1.0, 0.0, 0.0], 1e-12));
        }
    }

    #[test]
    fn perturbations_invert() {
        let rig = canonical_rig(6, &RigConfig::default()).unwrap();
        for (fwd, back) in [
            (Perturbation::pitch(7.5), Perturbation::pitch(-7.5)),
            (Perturbation::height(0.7), Perturbation::height(-0.7)),
        ] {
            let r = apply_perturbation(&apply_perturbation(&rig, &fwd), &back);
            for (a, b) in rig.cameras.iter().zip(&r.cameras) {
                for i in 0..3 {
                    assert!((a.extrinsics.translation[i] - b.extrinsics.translation[i]).abs() < 1e-12);
                    for j in 0..3 {
                        assert!((a.extrinsics.rotation[i][j] - b.extrinsics.rotation[i][j]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn perturbation_parsing() {
        assert_eq!("pitch-10".parse::<Perturbation>().unwrap(), Perturbation::pitch(-10.0));
        assert_eq!("height+1.0".parse::<Perturbation>().unwrap(), Perturbation::height(1.0));
        assert_eq!("depth:+1".parse::<Perturbation>().unwrap(), Perturbation::depth(1.0));
        assert_eq!("original".parse::<Perturbation>().unwrap(), Perturbation::identity());
        assert!(matches!("roll+3".parse::<Perturbation>(), Err(Error::Config(_))));
        for p in Perturbation::standard_conditions() {
            assert_eq!(p.label().parse::<Perturbation>().unwrap(), p);
        }
    }

    #[test]
    fn standard_condition_magnitudes() {
        let conds = Perturbation::standard_conditions();
        let mags: Vec<(PerturbationKind, f64)> = conds.iter().map(|p| (p.kind, p.magnitude)).collect();
        assert_eq!(
            mags,
            vec![
                (PerturbationKind::Identity, 0.0),
                (PerturbationKind::Pitch, 5.0),
                (PerturbationKind::Pitch, -10.0),
                (PerturbationKind::Height, 1.0),
                (PerturbationKind::Height, -0.7),
                (PerturbationKind::Depth, 1.0),
            ]
        );
    }

    #[test]
    fn invalid_rotation_rejected() {
        let bad = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Extrinsics::new(bad, [0.0; 3]).is_err());
        let reflect = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(Extrinsics::new(reflect, [0.0; 3]).is_err());
    }

    #[test]
    fn rig_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rig.json");
        let rig = apply_perturbation(
            &canonical_rig(6, &RigConfig::default()).unwrap(),
            &Perturbation::pitch(-10.0),
        );
        rig.save_json(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"ego_xyz\": \"flu\""));
        assert!(text.contains("\"cam_xyz\": \"rdf\""));
        assert_eq!(CameraRig::load_json(&path).unwrap(), rig);
    }

    #[test]
    fn round_trip_random_points() {
        let rig = canonical_rig(6, &RigConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for cam in &rig.cameras {
            for _ in 0..200 {
                let u = rng.gen_range(0.0..56.0);
                let v = rng.gen_range(0.0..32.0);
                let z = rng.gen_range(0.5..60.0);
                let p = cam.unproject(u, v, z).unwrap();
                let (u2, v2, z2) = cam.project(&p).unwrap();
                assert!((u - u2).abs() < 1e-9 && (v - v2).abs() < 1e-9 && (z - z2).abs() < 1e-9);
            }
        }
    }
}
