//! Depth-derived 3D positional embeddings.
//!
//! Each token's patch is unprojected to an ego-frame point with whatever rig
//! the caller supplies, encoded with multi-scale sinusoids, passed through a
//! small MLP, and added to the appearance features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraRig;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::numerics::{Bound, Graph, ParamId, ParamSet, Tensor, Var};
use crate::patches::{TokenLayout, TokenPoints};
use crate::world::DepthMap;

/// Sinusoidal encoding with geometrically spaced wavelengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeConfig {
    pub bands: usize,
    /// Shortest wavelength in meters.
    pub min_wavelength: f64,
    /// Longest wavelength in meters.
    pub max_wavelength: f64,
}

impl Default for SpeConfig {
    fn default() -> Self {
        SpeConfig {
            bands: 4,
            min_wavelength: 0.5,
            max_wavelength: 64.0,
        }
    }
}

impl SpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 {
            return Err(Error::Config("encoding needs at least one band".into()));
        }
        if !(self.min_wavelength > 0.0 && self.max_wavelength >= self.min_wavelength) {
            return Err(Error::Config(format!(
                "wavelengths must satisfy 0 < min <= max, got {} and {}",
                self.min_wavelength, self.max_wavelength
            )));
        }
        Ok(())
    }

    /// Output width: sine and cosine per band per axis.
    pub fn width(&self) -> usize {
        6 * self.bands
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        if self.bands == 1 {
            return vec![self.min_wavelength];
        }
        let ratio = self.max_wavelength / self.min_wavelength;
        (0..self.bands)
            .map(|k| self.min_wavelength * ratio.powf(k as f64 / (self.bands - 1) as f64))
            .collect()
    }
}

/// Encode one point as `[sin(x/λ0), cos(x/λ0), sin(x/λ1), ..., cos(z/λB)]`.
pub fn spe(p: &Vec3, cfg: &SpeConfig) -> Vec<f64> {
    let lambdas = cfg.wavelengths();
    let mut out = Vec::with_capacity(cfg.width());
    for axis in p {
        for l in &lambdas {
            let (s, c) = (axis / l).sin_cos();
            out.push(s);
            out.push(c);
        }
    }
    out
}

/// Row-per-point encoding matrix.
pub fn spe_matrix(points: &[Vec3], cfg: &SpeConfig) -> Tensor {
    let mut data = Vec::with_capacity(points.len() * cfg.width());
    for p in points {
        data.extend(spe(p, cfg));
    }
    Tensor::new(vec![points.len(), cfg.width()], data).expect("consistent width")
}

/// Token points of the current frame under `rig`, which may differ from the
/// rig that captured the depth.
pub fn build_pointcloud(depth: &[DepthMap], rig: &CameraRig, layout: &TokenLayout) -> Result<TokenPoints> {
    if depth.len() != rig.len() {
        return Err(Error::Contract(format!(
            "{} depth maps but the embedding rig has {} cameras",
            depth.len(),
            rig.len()
        )));
    }
    layout.points(depth, &rig.cameras)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialConfig {
    pub spe: SpeConfig,
    pub hidden: usize,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        SpatialConfig {
            spe: SpeConfig::default(),
            hidden: 32,
        }
    }
}

/// Two-layer tokenwise MLP from the encoding to the feature width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialEncoder {
    pub config: SpatialConfig,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl SpatialEncoder {
    pub fn new<R: Rng>(params: &mut ParamSet, config: SpatialConfig, channels: usize, rng: &mut R) -> Result<Self> {
        config.spe.validate()?;
        if config.hidden == 0 || channels == 0 {
            return Err(Error::Config("spatial MLP widths must be positive".into()));
        }
        let d = config.spe.width();
        let w1 = params.add_normal("spatial.w1", &[d, config.hidden], (1.0 / d as f64).sqrt(), rng);
        let b1 = params.add_zeros("spatial.b1", &[config.hidden]);
        let w2 = params.add_normal(
            "spatial.w2",
            &[config.hidden, channels],
            (1.0 / config.hidden as f64).sqrt(),
            rng,
        );
        let b2 = params.add_zeros("spatial.b2", &[channels]);
        Ok(SpatialEncoder { config, w1, b1, w2, b2 })
    }

    pub fn param_count(config: &SpatialConfig, channels: usize) -> usize {
        let d = config.spe.width();
        d * config.hidden + config.hidden + config.hidden * channels + channels
    }

    /// Embeddings `[tokens × channels]` from an encoding matrix.
    pub fn embed(&self, g: &mut Graph, p: &Bound, encoding: Var) -> Result<Var> {
        let h = g.matmul(encoding, p.var(self.w1))?;
        let h = g.add_bias(h, p.var(self.b1))?;
        let h = g.gelu(h);
        let e = g.matmul(h, p.var(self.w2))?;
        g.add_bias(e, p.var(self.b2))
    }
}

/// `features + embedding`, rejecting any shape mismatch.
pub fn inject(g: &mut Graph, features: Var, embedding: Var) -> Result<Var> {
    let (fs, es) = (g.value(features).shape(), g.value(embedding).shape());
    if fs != es {
        return Err(Error::Contract(format!(
            "cannot inject embedding of shape {es:?} into features of shape {fs:?}"
        )));
    }
    g.add(features, embedding)
}
