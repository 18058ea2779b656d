//! Dense reverse-mode differentiation over small matrices, with RMSProp and
//! a binary checkpoint format.

mod checkpoint;
mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointError, MAGIC};
pub use gradcheck::{gradient_check, GradCheck};
pub use optim::{OptimConfig, OptimError, ParamStore, Params, SharedParamStore};
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Tensor};
