//! Minimal f64 neural-network layers with explicit backward passes.
//!
//! Batches are `(N, C, H, W)` arrays. Each layer caches what its
//! backward pass needs during `forward_train`; `forward_eval` borrows
//! immutably, caches nothing, and uses frozen normalization statistics,
//! so inference is deterministic and safe to run concurrently on shared
//! parameters. Everything runs in double precision so analytic gradients
//! can be checked against central finite differences.

mod act;
mod conv;
mod init;
mod linear;
mod norm;
mod ops;
mod param;

pub use act::Activation;
pub use conv::Conv2d;
pub use init::fill_fan_in_uniform;
pub use linear::Linear;
pub use norm::BatchNorm2d;
pub use ops::{global_avg_pool, global_avg_pool_backward, upsample2x, upsample2x_backward};
pub use param::{BufferMut, BufferVisitor, ParamMut, ParamVisitor};
