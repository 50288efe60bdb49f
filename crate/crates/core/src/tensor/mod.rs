//! Minimal dense linear algebra and reverse-mode differentiation in `f64`.

mod graph;
mod mat;
mod optim;
mod param;

pub use graph::{softmax_rows, CustomOp, Gradients, Graph, Mask, Unary, Var};
pub use mat::{gemm_into, Mat};
pub use optim::{clip_global_norm, AdamW};
pub use param::{Grads, Param, ParamGroup, ParamId, ParamStore};
