use std::path::Path;

use geoview::camera::Perturbation;
use geoview::evaluation::EgoExtents;
use geoview::training::{TrainConfig, PAPER_LR};
use geoview::world::{DatasetSpec, SceneConfig};
use geoview::{Error, Result};
use serde::{Deserialize, Serialize};

/// Perturbation and camera subsets for the extrinsic-replacement study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualConfig {
    pub perturbation: Perturbation,
    pub sets: Vec<String>,
}

impl Default for CounterfactualConfig {
    fn default() -> Self {
        CounterfactualConfig {
            perturbation: Perturbation::depth(1.0),
            sets: ["none", "front_rear", "sides", "all"].map(String::from).to_vec(),
        }
    }
}

/// Everything a command may need. Every field is optional in the JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub eval: DatasetSpec,
    pub conditions: Vec<Perturbation>,
    pub counterfactual: CounterfactualConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            eval: DatasetSpec {
                seed: 99,
                n_scenes: 100,
                scene: SceneConfig::default(),
            },
            conditions: Perturbation::standard_conditions(),
            counterfactual: CounterfactualConfig::default(),
        }
    }
}

/// Command-line values that override the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// From `--workers`, or from `GEOVIEW_WORKERS` when the flag is absent.
    pub workers: Option<usize>,
    pub paper_lr: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Config file (or defaults), then environment, then flags.
    pub fn resolve(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig> {
        let mut cfg = match path {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = ov.seed {
            cfg.train.seed = seed;
        }
        if let Some(w) = ov.workers {
            if w == 0 {
                return Err(Error::Config("workers must be >= 1".into()));
            }
            cfg.train.workers = w;
        }
        if ov.paper_lr {
            cfg.train.base_lr = PAPER_LR;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.eval.scene.validate()?;
        if self.eval.scene.horizon != self.train.model.horizon || self.eval.scene.k_frames != self.train.model.k_frames {
            return Err(Error::Config("evaluation scenes must share the model's horizon and window".into()));
        }
        if self.conditions.is_empty() {
            return Err(Error::Config("at least one evaluation condition is required".into()));
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        self.train.workers
    }

    pub fn ego(&self) -> EgoExtents {
        EgoExtents {
            length: self.eval.scene.ego_length,
            width: self.eval.scene.ego_width,
        }
    }

    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.train.workers = 1;
        geoview::hashing::json_hash(&c)
    }
}
