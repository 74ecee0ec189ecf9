//! Small reverse-mode differentiation engine and the Adam optimizer.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{NodeRef, Tape};
pub use tensor::Tensor;
