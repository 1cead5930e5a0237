//! A small feed-forward regressor with reverse-mode gradients and Adam.

mod mlp;
mod optim;
mod tape;

pub use crate::rng::{Purpose, RandomStream};
pub use mlp::{check_dims, mlp_init, Bound, MlpRegressor, Mode, Normalization, TapeForward};
pub use optim::{adam_step, clip_global_norm, global_norm, lr_schedule, AdamConfig, AdamState, ADAM_EPS};
pub use tape::{Grads, Mat, Tape, Var};
