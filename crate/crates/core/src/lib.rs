//! Multi-task quantum generative models built from sequences of trainable
//! two-outcome measurements, and the tooling to study how they learn
//! question-order effects.
//!
//! Layout:
//!
//! - [`linalg`]: dense complex matrices, Jacobi eigenvalues, trace norm,
//!   gate application on state vectors.
//! - [`circuit`]: the per-observable ansatz `V(θ)`, observables
//!   `Q = V D V^dagger` and the non-commutativity score.
//! - [`measure`]: exact joint answer distributions for a question order,
//!   a density-matrix cross-check, shot sampling and re-indexing.
//! - [`datasets`]: the two synthetic order-effect task families and their
//!   order-effect strength.
//! - [`train`]: LMS loss, parameter-shift and finite-difference gradients,
//!   Adam, the training loop.
//! - [`experiment`]: configuration, multi-trial runners, result files and
//!   the validation suites behind the `qorder` binary.

pub mod circuit;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod measure;
pub mod par;
pub mod train;

pub use circuit::{AnsatzConfig, ModelParams, ObservableParams};
pub use datasets::{D2Config, LikeabilityScores, TaskSet};
pub use error::{Error, Result};
pub use linalg::{CMatrix, StateVector};
pub use measure::{AnswerDistribution, Indexing, QuestionOrder};
pub use train::{GradMethod, InitMode, TaskSplit, TrainConfig, TrainingTrace};
