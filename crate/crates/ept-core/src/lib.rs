//! Efficient prompt tuning against a small frozen transformer.
//!
//! The crate implements the full pipeline: decomposing a source soft prompt
//! into a short prompt plus a low-rank embedding update, fusing and
//! re-projecting the short prompt through a mixture of expert projections,
//! training the pieces with a tape-based reverse-mode differentiator against
//! a frozen toy encoder, and baking the result back into a plain prompt.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root pin `f64`, which the trainer and file formats
//! use throughout.

pub mod budget;
pub mod corpus;
pub mod decompose;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod io;
pub mod matrix;
pub mod optim;
pub mod pipeline;
pub mod projection;
pub mod rng;
pub mod scalar;
pub mod svd;
pub mod tape;
pub mod tasks;
pub mod trainer;

pub use budget::{BudgetMode, PromptBudget};
pub use decompose::{decompose, init_source_prompt, update_input_embedding, DecomposedPrompt};
pub use encoder::{pretrain_encoder, EncoderConfig, FrozenEncoder};
pub use error::{EptError, Result};
pub use fusion::{attention_weights, fuse, AttentionWeights, FusionVariant};
pub use gradcheck::{grad_check, ForwardRun, GradCheckConfig, GradReport};
pub use io::{
    content_hash_hex, ensure_compatible, read_baked_prompt, read_encoder_checkpoint,
    read_ept_checkpoint, write_baked_prompt, write_encoder_checkpoint, write_ept_checkpoint,
};
pub use matrix::{Axis, Matrix};
pub use optim::{Optimizer, OptimizerKind};
pub use pipeline::{bake, baked_forward, forward, prompt_matrix, BakedPrompt, EptParams};
pub use projection::{amend, expert_forward, gate_weights, ExpertStack, GateNet};
pub use scalar::Scalar;
pub use tape::{Gradients, NamedParams, NodeId, Tape};
pub use tasks::{kshot_subsample, make_task, LabeledDataset, TaskConfig, TaskKind};
pub use trainer::{evaluate, train, RunRecord, TrainConfig};

/// Double-precision matrix, the concrete type used by the trainer and IO.
pub type Mat = Matrix<f64>;
