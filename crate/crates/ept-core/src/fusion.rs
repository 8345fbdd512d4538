//! Prompt fusion: attention between the short prompt and the low-rank
//! product, folded back into the short prompt.
//!
//! The attention logits are `(1/√d) · P_s · (A·B)ᵀ`. What happens next is
//! configurable, because the source formula's Einstein summation admits two
//! readings:
//!
//! * [`FusionVariant::CrossAttention`] (default): softmax over the `m` axis,
//!   then `P_f = P_s + W · (A·B)` — each prompt token attends over the rows
//!   of the low-rank product and absorbs a combination of them.
//! * [`FusionVariant::LiteralEinsum`]: softmax over the `s` axis, then each
//!   token is rescaled by its total weight, `P_f[t,:] = (1 + Σ_j W[t,j]) ·
//!   P_s[t,:]`. This keeps the contraction exactly as written; with the
//!   softmax on the `m` axis instead, the gate would be identically 1 and the
//!   fusion would collapse to `2·P_s`.
//!
//! Every function exists in two forms: a plain-matrix version for direct use
//! and oracle testing, and a tape-builder version used by the training
//! pipeline. The two apply identical kernels in identical order, so their
//! outputs agree bit for bit.

use std::fmt;
use std::str::FromStr;

use crate::error::{EptError, Result};
use crate::matrix::{Axis, Matrix};
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionVariant {
    #[default]
    CrossAttention,
    LiteralEinsum,
}

impl FusionVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionVariant::CrossAttention => "cross_attention",
            FusionVariant::LiteralEinsum => "literal_einsum",
        }
    }

    fn softmax_axis(self) -> Axis {
        match self {
            // Each token's weights over the m low-rank rows sum to 1.
            FusionVariant::CrossAttention => Axis::Cols,
            // Softmax down the token axis so the per-token gate can vary.
            FusionVariant::LiteralEinsum => Axis::Rows,
        }
    }
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionVariant {
    type Err = EptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross_attention" => Ok(FusionVariant::CrossAttention),
            "literal_einsum" => Ok(FusionVariant::LiteralEinsum),
            other => Err(EptError::Contract(format!(
                "unknown fusion variant '{other}' (expected cross_attention or literal_einsum)"
            ))),
        }
    }
}

/// Softmaxed attention weights tagged with the variant that produced them,
/// so [`fuse`] can reject a mismatched pairing.
#[derive(Debug, Clone)]
pub struct AttentionWeights<F> {
    pub weights: Matrix<F>,
    pub variant: FusionVariant,
}

fn inv_sqrt_dim<F: Scalar>(d: usize) -> F {
    F::one() / F::cast(d as f64).sqrt()
}

/// `softmax((1/√d) · P_s · (A·B)ᵀ)` along the variant's axis; shape `s×m`.
pub fn attention_weights<F: Scalar>(
    p_short: &Matrix<F>,
    a: &Matrix<F>,
    b: &Matrix<F>,
    variant: FusionVariant,
) -> Result<AttentionWeights<F>> {
    let d = p_short.cols();
    if d == 0 {
        return Err(EptError::Contract(
            "attention_weights needs a positive embedding width".to_string(),
        ));
    }
    let ab = a.matmul(b)?;
    let logits = p_short.matmul(&ab.transpose())?.scale(inv_sqrt_dim(d));
    Ok(AttentionWeights {
        weights: logits.softmax(variant.softmax_axis()),
        variant,
    })
}

/// Fused prompt `P_f`, shape `s×d`. Errors when `w` was built for a
/// different variant than the one requested here.
pub fn fuse<F: Scalar>(
    p_short: &Matrix<F>,
    w: &AttentionWeights<F>,
    a: &Matrix<F>,
    b: &Matrix<F>,
    variant: FusionVariant,
) -> Result<Matrix<F>> {
    if w.variant != variant {
        return Err(EptError::Contract(format!(
            "attention weights built for {} but fuse called with {}",
            w.variant, variant
        )));
    }
    match variant {
        FusionVariant::CrossAttention => {
            let ab = a.matmul(b)?;
            p_short.add(&w.weights.matmul(&ab)?)
        }
        FusionVariant::LiteralEinsum => {
            let gate = w.weights.sum_axis(Axis::Cols).map(|g| g + F::one());
            p_short.mul_col_broadcast(&gate)
        }
    }
}

/// Tape version of [`attention_weights`]; `ab` is the already-recorded node
/// for `A·B` so the product is shared with the embedding update.
pub fn build_attention<F: Scalar>(
    tape: &mut Tape<F>,
    p_short: NodeId,
    ab: NodeId,
    variant: FusionVariant,
) -> Result<NodeId> {
    let d = tape.value(p_short).cols();
    if d == 0 {
        return Err(EptError::Contract(
            "attention_weights needs a positive embedding width".to_string(),
        ));
    }
    let abt = tape.transpose(ab);
    let logits = tape.matmul(p_short, abt)?;
    let scaled = tape.scale(logits, inv_sqrt_dim(d));
    Ok(tape.softmax(scaled, variant.softmax_axis()))
}

/// Tape version of [`fuse`].
pub fn build_fuse<F: Scalar>(
    tape: &mut Tape<F>,
    p_short: NodeId,
    w: NodeId,
    ab: NodeId,
    variant: FusionVariant,
) -> Result<NodeId> {
    match variant {
        FusionVariant::CrossAttention => {
            let mixed = tape.matmul(w, ab)?;
            tape.add(p_short, mixed)
        }
        FusionVariant::LiteralEinsum => {
            let sums = tape.row_sums(w);
            let gate = tape.add_scalar(sums, F::one());
            tape.mul_col_broadcast(p_short, gate)
        }
    }
}
