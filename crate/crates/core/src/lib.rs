//! Subclass-aware knowledge distillation for small students.
//!
//! A trained teacher's class probabilities are split into `S` pseudo-subclass
//! probabilities per class using directions derived from its embeddings, and
//! a student with `C·S` outputs is distilled on that finer distribution.
//! Baselines, a synthetic benchmark and an experiment harness live alongside.

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod harness;
pub mod lelp;
pub mod linalg;
pub mod nn;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
pub use lelp::{
    fit_projector, lelp_loss, predict_class, subsplit, train_student_lelp, KdParams, SubclassProjector,
    TeacherBundle,
};
pub use linalg::Matrix;
pub use nn::{HeadSplit, Mlp};
pub use train::{TrainConfig, TrainOutcome};
