//! Dense `f64` tensors with a define-by-run reverse-mode autodiff graph.
//!
//! ```
//! use tensorcore::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let w = g.param(Tensor::vector(vec![1.0, -2.0, 3.0]));
//! let sq = g.mul(w, w).unwrap();
//! let s = g.sum(sq);
//! let loss = g.scale(s, 0.5);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(w).unwrap().data(), &[1.0, -2.0, 3.0]);
//! ```

pub mod check;
mod error;
mod graph;
pub mod optim;
mod store;
mod tensor;

pub use check::{grad_check, grad_check_sampled, GradCheckReport, ParamCheck, FD_STEP};
pub use error::{Result, TensorError};
pub use graph::{Graph, Var, LAYER_NORM_EPS};
pub use optim::{clip_grad_norm, Adam};
pub use store::{ParamStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use tensor::Tensor;
