//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EptError>;

#[derive(Debug, Error)]
pub enum EptError {
    /// Two operands have incompatible shapes.
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// A requested truncation rank is outside `1..=min(rows, cols)`.
    #[error("rank {r} out of range for a {rows}x{cols} matrix (valid: 1..={max})")]
    RankOutOfRange {
        r: usize,
        rows: usize,
        cols: usize,
        max: usize,
    },

    /// The exact budget equation has no integer rank for the requested short length.
    #[error(
        "no integer rank solves the budget for l={l}, s={s}, m={m}, d={d}; \
         nearest valid short lengths: {}",
        format_nearest(*nearest_below, *nearest_above)
    )]
    BudgetNotIntegral {
        l: usize,
        s: usize,
        m: usize,
        d: usize,
        nearest_below: Option<usize>,
        nearest_above: Option<usize>,
    },

    /// A budget tuple violates one of its structural invariants.
    #[error("invalid budget (l={l}, s={s}, r={r}, m={m}, d={d}): {reason}")]
    InvalidBudget {
        l: usize,
        s: usize,
        r: usize,
        m: usize,
        d: usize,
        reason: String,
    },

    /// Vocabulary has too few rows for the requested draw.
    #[error("vocabulary too small: need {needed} rows, pool has {available}")]
    VocabTooSmall { needed: usize, available: usize },

    /// An API contract was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Expert or gate index outside the stack.
    #[error("expert index {index} out of range for {n_experts} experts")]
    ExpertIndexOutOfRange { index: usize, n_experts: usize },

    /// A finite-difference probe produced a non-finite loss.
    #[error("gradient probe returned non-finite loss at parameter '{param}' entry ({row}, {col})")]
    ProbeNotFinite {
        param: String,
        row: usize,
        col: usize,
    },

    /// Dataset cannot satisfy the request.
    #[error("data error: {0}")]
    Data(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step} (lr_prompt={lr_prompt}, lr_lowrank={lr_lowrank})")]
    Divergence {
        step: usize,
        lr_prompt: f64,
        lr_lowrank: f64,
    },

    /// A checkpoint does not match the configuration it is being loaded into.
    #[error("incompatible checkpoint: file has {found}, current config has {expected}")]
    IncompatibleCheckpoint { found: String, expected: String },

    /// A checkpoint or data file is malformed.
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_nearest(below: Option<usize>, above: Option<usize>) -> String {
    match (below, above) {
        (Some(b), Some(a)) => format!("s={b} and s={a}"),
        (Some(b), None) => format!("s={b}"),
        (None, Some(a)) => format!("s={a}"),
        (None, None) => "none".to_string(),
    }
}
