//! Dense-tensor arithmetic with reverse-mode differentiation.
//!
//! Everything the network computes is expressed through the primitives in
//! this module: rank-1..3 [`Tensor`]s (feature layout is channels x time),
//! elementwise and reduction ops, 1-D convolutions, pooling and
//! nearest-neighbor interpolation. Each primitive records a tape node when
//! gradients are enabled; [`Tensor::backward`] replays the tape in reverse
//! topological order and frees it afterwards.
//!
//! All computation is sequential and deterministic: identical inputs produce
//! bit-identical outputs on the same platform.

mod conv;
mod gradcheck;
pub(super) mod ops;
mod scalar;
mod tensor;

pub use conv::ConvSpec;
pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use scalar::Scalar;
pub use tensor::{is_grad_enabled, no_grad, NoGradGuard, Tensor};
