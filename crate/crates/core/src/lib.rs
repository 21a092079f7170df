//! Depth-derived 3D positional embeddings and frozen geometric-prior fusion
//! for a desk-scale multi-camera trajectory planner, plus the synthetic
//! world and viewpoint-perturbation evaluation used to study them.

pub mod camera;
pub mod error;
pub mod evaluation;
pub mod geom;
pub mod fusion;
pub mod geoprior;
pub mod hashing;
pub mod numerics;
pub mod patches;
pub mod planner;
pub mod spatial;
pub mod training;
pub mod world;

pub use error::{Error, Result};
