//! Shaped `f64` arrays, a reverse-mode tape, and the primitive layers the
//! model is built from.

mod gemm;
pub mod gradcheck;
pub mod graph;
pub mod params;
pub mod rng;
mod tensor;

use thiserror::Error;

pub use gradcheck::{grad_check, grad_check_inputs, GradCheckReport};
pub use graph::{softplus_inverse, softplus_value, Graph, Mode, Var, LAYER_NORM_EPS};
pub use params::{Gradients, ParamId, ParamStore};
pub use rng::Rng;
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("non-finite value in {0}")]
    NonFiniteValue(&'static str),
    #[error("convolution kernel must be odd, got {0}")]
    EvenKernel(usize),
    #[error("GLU input width {0} is not even")]
    OddGluWidth(usize),
    #[error("grouping factor must be >= 1, got {0}")]
    InvalidFactor(usize),
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("backward needs a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("parameter layouts differ")]
    LayoutMismatch,
}
