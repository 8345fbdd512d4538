//! Multi-space projection: a stack of bottleneck experts re-encodes the
//! short prompt and a per-token softmax gate blends their outputs.
//!
//! Each expert is a two-layer map `relu(P_s·W_down + b_down)·W_up + b_up`
//! with bottleneck width `m`; the gate scores every token with one affine
//! head per expert and softmaxes across experts, so each token's blend
//! weights sum to 1. The amended prompt is the gate-weighted sum of expert
//! outputs.
//!
//! As in [`crate::fusion`], every operation has a plain-matrix form and a
//! tape-builder form that produce bit-identical values.

use crate::error::{EptError, Result};
use crate::matrix::{Axis, Matrix};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};

/// One bottleneck expert `d → m → d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expert<F> {
    pub w_down: Matrix<F>,
    /// 1×m row added after the down-projection.
    pub b_down: Matrix<F>,
    pub w_up: Matrix<F>,
    /// 1×d row added after the up-projection.
    pub b_up: Matrix<F>,
}

/// All experts of one pipeline; shapes are shared across experts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertStack<F> {
    experts: Vec<Expert<F>>,
}

/// One affine scoring head per expert: a d×1 column plus a 1×1 bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GateHead<F> {
    pub weight: Matrix<F>,
    pub bias: Matrix<F>,
}

/// The gating network: as many heads as there are experts.
#[derive(Debug, Clone, PartialEq)]
pub struct GateNet<F> {
    heads: Vec<GateHead<F>>,
}

impl<F: Scalar> ExpertStack<F> {
    /// Seeded init: down maps uniform on ±1/√d, up maps on ±1/√m, biases
    /// zero. The scales keep initial expert outputs near unit size so the
    /// gate starts unsaturated.
    pub fn init(n_experts: usize, d: usize, m: usize, rng: &mut SeededRng) -> Result<Self> {
        if n_experts == 0 {
            return Err(EptError::Contract(
                "expert stack needs at least one expert".to_string(),
            ));
        }
        let down_scale = 1.0 / (d as f64).sqrt();
        let up_scale = 1.0 / (m as f64).sqrt();
        let experts = (0..n_experts)
            .map(|_| Expert {
                w_down: Matrix::random_uniform(d, m, -down_scale, down_scale, rng),
                b_down: Matrix::zeros(1, m),
                w_up: Matrix::random_uniform(m, d, -up_scale, up_scale, rng),
                b_up: Matrix::zeros(1, d),
            })
            .collect();
        Ok(ExpertStack { experts })
    }

    pub fn from_experts(experts: Vec<Expert<F>>) -> Result<Self> {
        if experts.is_empty() {
            return Err(EptError::Contract(
                "expert stack needs at least one expert".to_string(),
            ));
        }
        Ok(ExpertStack { experts })
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn expert(&self, i: usize) -> Result<&Expert<F>> {
        self.experts.get(i).ok_or(EptError::ExpertIndexOutOfRange {
            index: i,
            n_experts: self.experts.len(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Expert<F>> {
        self.experts.iter()
    }
}

impl<F: Scalar> GateNet<F> {
    /// Seeded init: head weights uniform on ±1/√d, biases zero.
    pub fn init(n_experts: usize, d: usize, rng: &mut SeededRng) -> Result<Self> {
        if n_experts == 0 {
            return Err(EptError::Contract(
                "gate needs at least one head".to_string(),
            ));
        }
        let scale = 1.0 / (d as f64).sqrt();
        let heads = (0..n_experts)
            .map(|_| GateHead {
                weight: Matrix::random_uniform(d, 1, -scale, scale, rng),
                bias: Matrix::zeros(1, 1),
            })
            .collect();
        Ok(GateNet { heads })
    }

    pub fn from_heads(heads: Vec<GateHead<F>>) -> Result<Self> {
        if heads.is_empty() {
            return Err(EptError::Contract(
                "gate needs at least one head".to_string(),
            ));
        }
        Ok(GateNet { heads })
    }

    pub fn n_experts(&self) -> usize {
        self.heads.len()
    }

    pub fn head(&self, i: usize) -> Result<&GateHead<F>> {
        self.heads.get(i).ok_or(EptError::ExpertIndexOutOfRange {
            index: i,
            n_experts: self.heads.len(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &GateHead<F>> {
        self.heads.iter()
    }
}

/// `relu(P_s·W_down + b_down)·W_up + b_up` for expert `i`; shape `s×d`.
pub fn expert_forward<F: Scalar>(
    p_short: &Matrix<F>,
    stack: &ExpertStack<F>,
    i: usize,
) -> Result<Matrix<F>> {
    let e = stack.expert(i)?;
    let hidden = p_short
        .matmul(&e.w_down)?
        .add_row_broadcast(&e.b_down)?
        .relu();
    hidden.matmul(&e.w_up)?.add_row_broadcast(&e.b_up)
}

/// Per-token softmax over expert scores; shape `s×N_e`, rows sum to 1.
pub fn gate_weights<F: Scalar>(p_short: &Matrix<F>, gate: &GateNet<F>) -> Result<Matrix<F>> {
    let cols: Vec<Matrix<F>> = gate
        .iter()
        .map(|h| p_short.matmul(&h.weight)?.add_row_broadcast(&h.bias))
        .collect::<Result<_>>()?;
    let refs: Vec<&Matrix<F>> = cols.iter().collect();
    Ok(Matrix::concat_cols(&refs)?.softmax(Axis::Cols))
}

/// Gate-weighted sum of expert outputs; shape `s×d`.
pub fn amend<F: Scalar>(
    p_short: &Matrix<F>,
    stack: &ExpertStack<F>,
    gate: &GateNet<F>,
) -> Result<Matrix<F>> {
    if stack.n_experts() != gate.n_experts() {
        return Err(EptError::Contract(format!(
            "{} experts but {} gate heads",
            stack.n_experts(),
            gate.n_experts()
        )));
    }
    let g = gate_weights(p_short, gate)?;
    let mut acc: Option<Matrix<F>> = None;
    for i in 0..stack.n_experts() {
        let term = expert_forward(p_short, stack, i)?.mul_col_broadcast(&g.slice_cols(i, 1))?;
        acc = Some(match acc {
            Some(prev) => prev.add(&term)?,
            None => term,
        });
    }
    Ok(acc.expect("stack has at least one expert"))
}

/// Node ids of one expert's parameters on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ExpertNodes {
    pub w_down: NodeId,
    pub b_down: NodeId,
    pub w_up: NodeId,
    pub b_up: NodeId,
}

/// Node ids of one gate head's parameters on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GateHeadNodes {
    pub weight: NodeId,
    pub bias: NodeId,
}

/// Tape version of [`expert_forward`].
pub fn build_expert_forward<F: Scalar>(
    tape: &mut Tape<F>,
    p_short: NodeId,
    expert: ExpertNodes,
) -> Result<NodeId> {
    let h = tape.matmul(p_short, expert.w_down)?;
    let hb = tape.add_row_broadcast(h, expert.b_down)?;
    let r = tape.relu(hb);
    let o = tape.matmul(r, expert.w_up)?;
    tape.add_row_broadcast(o, expert.b_up)
}

/// Tape version of [`gate_weights`].
pub fn build_gate_weights<F: Scalar>(
    tape: &mut Tape<F>,
    p_short: NodeId,
    heads: &[GateHeadNodes],
) -> Result<NodeId> {
    let mut cols = Vec::with_capacity(heads.len());
    for h in heads {
        let f = tape.matmul(p_short, h.weight)?;
        cols.push(tape.add_row_broadcast(f, h.bias)?);
    }
    let logits = tape.concat_cols(&cols)?;
    Ok(tape.softmax(logits, Axis::Cols))
}

/// Tape version of [`amend`], given already-built expert outputs and gates.
pub fn build_amend<F: Scalar>(
    tape: &mut Tape<F>,
    expert_outputs: &[NodeId],
    gates: NodeId,
) -> Result<NodeId> {
    if expert_outputs.is_empty() {
        return Err(EptError::Contract(
            "amend needs at least one expert output".to_string(),
        ));
    }
    let mut acc: Option<NodeId> = None;
    for (i, &out) in expert_outputs.iter().enumerate() {
        let g = tape.slice_cols(gates, i, 1)?;
        let term = tape.mul_col_broadcast(out, g)?;
        acc = Some(match acc {
            Some(prev) => tape.add(prev, term)?,
            None => term,
        });
    }
    Ok(acc.expect("non-empty by the check above"))
}
