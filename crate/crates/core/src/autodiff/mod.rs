//! Small reverse-mode differentiation tape over dense image tensors.
//!
//! The tape is generic over [`Real`], so running it with [`Dual`] scalars
//! yields exact Hessian-vector products (forward-over-reverse), which the
//! second-order meta-gradient relies on.

mod graph;
mod real;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use real::{Dual, Real};
pub use tensor::Tensor;
