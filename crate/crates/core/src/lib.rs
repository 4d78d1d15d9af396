//! Multi-modal inverse estimation on a synthetic ICF-style benchmark.
//!
//! The crate bundles everything the experiment harness needs:
//!
//! * [`tensor`]: dense `f64` tensors with a reverse-mode tape.
//! * [`backbone`]: component-wise patch embedding, factorized axial
//!   attention blocks, cross-field attention and a de-patchify head.
//! * [`tsh`]: the task-specific head fusing latent tokens with scalar
//!   diagnostics into parameter estimates.
//! * [`sensitivity`]: standardization, PCA and ridge regression used to find
//!   weakly identifiable parameters before any network is trained.
//! * [`data`]: the synthetic forward simulator, on-disk container and splits.
//! * [`training`]: AdamW, warmup/cosine schedules, the joint trainer,
//!   checkpoints and evaluation.

pub mod backbone;
pub mod data;
pub mod error;
pub mod sensitivity;
pub mod tensor;
pub mod training;
pub mod tsh;

pub use error::{Error, Result};
pub use nalgebra;
