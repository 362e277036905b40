//! Reverse-mode automatic differentiation with detach support.

mod params;
mod real;
mod tape;

pub use params::{ParamBlock, ParamGroup, ParamId, ParameterStore};
pub use real::{ParamCtx, PlainCtx, Real, TapeCtx};
pub use tape::{sigmoid_with_slope, Gradients, Op, Tape, Var};

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("backward needs a single scalar root, got {0} outputs")]
    NonScalarRoot(usize),
    #[error("root variable was recorded on a different tape")]
    ForeignRoot,
}
