//! Dense tensors, reverse-mode differentiation, and the AdamW optimizer.

pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{Gradients, Graph, OpKind, Var};
pub use optim::{cosine_lr, AdamW, AdamWConfig};
pub use params::{Bound, Param, ParamId, ParamSet};
pub use tensor::Tensor;
