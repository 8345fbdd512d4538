//! The assembled prompt pipeline.
//!
//! [`EptParams`] owns every trainable piece — the decomposed prompt, the
//! expert stack, and the gate — plus the switches that turn fusion and
//! projection on or off. [`forward`] produces the `[P_new; I_up]` training
//! input per example, and [`bake`] collapses the trained networks into a
//! [`BakedPrompt`] whose inference is bit-identical to the live pipeline.
//!
//! Ablation semantics: with fusion off the fused prompt is just the short
//! prompt; with projection off the reconstructed prompt is just the fused
//! prompt; with both off the pipeline prepends the short prompt unchanged.
//! Degenerate geometry composes the same way — `s = 0` leaves no prompt rows
//! (fusion and projection have nothing to act on), and `r = 0` leaves no
//! low-rank factors (the embedding update and fusion become identities).
//! The parameter registry always matches the active mode: inert networks
//! are never registered, so their weights can never drift during training.

use crate::budget::PromptBudget;
use crate::decompose::{decompose, init_source_prompt, update_input_embedding, DecomposedPrompt};
use crate::error::{EptError, Result};
use crate::fusion::{attention_weights, build_attention, build_fuse, fuse, FusionVariant};
use crate::matrix::Matrix;
use crate::projection::{
    amend, build_amend, build_expert_forward, build_gate_weights, ExpertNodes, ExpertStack,
    GateHead, GateHeadNodes, GateNet,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Scalar;
use crate::tape::{NamedParams, NodeId, Tape};

/// Default number of experts.
pub const DEFAULT_N_EXPERTS: usize = 4;

/// `P_new = P_amend + P_f`.
pub fn reconstruct<F: Scalar>(p_amend: &Matrix<F>, p_f: &Matrix<F>) -> Result<Matrix<F>> {
    if p_amend.shape() != p_f.shape() {
        return Err(EptError::ShapeMismatch {
            op: "reconstruct",
            left_rows: p_amend.rows(),
            left_cols: p_amend.cols(),
            right_rows: p_f.rows(),
            right_cols: p_f.cols(),
        });
    }
    p_amend.add(p_f)
}

/// Every trainable piece of one pipeline, plus its mode switches.
#[derive(Debug, Clone, PartialEq)]
pub struct EptParams<F> {
    pub budget: PromptBudget,
    pub decomposed: DecomposedPrompt<F>,
    pub experts: ExpertStack<F>,
    pub gate: GateNet<F>,
    pub variant: FusionVariant,
    pub use_fusion: bool,
    pub use_projection: bool,
}

/// Tape nodes for one registration of [`EptParams`]; `None` marks pieces the
/// current geometry leaves out.
#[derive(Debug, Clone)]
pub struct EptNodes {
    /// Short prompt; `None` when `s = 0`.
    pub p_short: Option<NodeId>,
    /// Low-rank factors; `None` when `r = 0`.
    pub factors: Option<(NodeId, NodeId)>,
    /// The shared `A·B` product; `None` when `r = 0`.
    pub ab: Option<NodeId>,
    /// Expert parameters; empty unless projection is active.
    pub experts: Vec<ExpertNodes>,
    /// Gate parameters; empty unless projection is active.
    pub gate_heads: Vec<GateHeadNodes>,
}

impl<F: Scalar> EptParams<F> {
    /// Seeded initialization: source prompt drawn from the vocabulary table,
    /// decomposed per the budget; experts and gate freshly initialized.
    pub fn init(
        budget: &PromptBudget,
        vocab_embeddings: &Matrix<F>,
        n_experts: usize,
        variant: FusionVariant,
        use_fusion: bool,
        use_projection: bool,
        seed: u64,
    ) -> Result<Self> {
        let source = init_source_prompt(vocab_embeddings, budget.l, derive_seed(seed, "prompt"))?;
        let decomposed = decompose(&source, budget)?;
        let mut rng = rng_from_seed(derive_seed(seed, "projection"));
        let experts = ExpertStack::init(n_experts, budget.d, budget.m, &mut rng)?;
        let gate = GateNet::init(n_experts, budget.d, &mut rng)?;
        Ok(EptParams {
            budget: budget.clone(),
            decomposed,
            experts,
            gate,
            variant,
            use_fusion,
            use_projection,
        })
    }

    /// Fusion runs only when there are prompt rows to enrich and factors to
    /// attend over; otherwise the fused prompt is the short prompt itself.
    pub fn fusion_active(&self) -> bool {
        self.use_fusion && self.budget.s > 0 && self.budget.r > 0
    }

    /// Projection runs only when there are prompt rows to project.
    pub fn projection_active(&self) -> bool {
        self.use_projection && self.budget.s > 0
    }

    /// Names and values of exactly the trainable registry for this mode.
    pub fn to_named_params(&self) -> NamedParams<F> {
        let mut params = NamedParams::new();
        if self.budget.s > 0 {
            params.insert("short_prompt", self.decomposed.p_short.clone());
        }
        if self.budget.r > 0 {
            params.insert("factor_a", self.decomposed.a.clone());
            params.insert("factor_b", self.decomposed.b.clone());
        }
        if self.projection_active() {
            for (i, e) in self.experts.iter().enumerate() {
                params.insert(&format!("expert{i}.down_weight"), e.w_down.clone());
                params.insert(&format!("expert{i}.down_bias"), e.b_down.clone());
                params.insert(&format!("expert{i}.up_weight"), e.w_up.clone());
                params.insert(&format!("expert{i}.up_bias"), e.b_up.clone());
            }
            for (i, h) in self.gate.iter().enumerate() {
                params.insert(&format!("gate{i}.weight"), h.weight.clone());
                params.insert(&format!("gate{i}.bias"), h.bias.clone());
            }
        }
        params
    }

    /// Write trained values back. Every registry name must be present with
    /// its original shape.
    pub fn absorb_named_params(&mut self, params: &NamedParams<F>) -> Result<()> {
        let fetch = |name: &str, rows: usize, cols: usize| -> Result<Matrix<F>> {
            let value = params
                .get(name)
                .ok_or_else(|| EptError::Contract(format!("missing parameter '{name}'")))?;
            if value.shape() != (rows, cols) {
                return Err(EptError::Contract(format!(
                    "parameter '{name}' is {}x{}, expected {rows}x{cols}",
                    value.rows(),
                    value.cols()
                )));
            }
            Ok(value.clone())
        };
        let b = &self.budget;
        if b.s > 0 {
            self.decomposed.p_short = fetch("short_prompt", b.s, b.d)?;
        }
        if b.r > 0 {
            self.decomposed.a = fetch("factor_a", b.m, b.r)?;
            self.decomposed.b = fetch("factor_b", b.r, b.d)?;
        }
        if self.projection_active() {
            let mut experts = Vec::with_capacity(self.experts.n_experts());
            for i in 0..self.experts.n_experts() {
                experts.push(crate::projection::Expert {
                    w_down: fetch(&format!("expert{i}.down_weight"), b.d, b.m)?,
                    b_down: fetch(&format!("expert{i}.down_bias"), 1, b.m)?,
                    w_up: fetch(&format!("expert{i}.up_weight"), b.m, b.d)?,
                    b_up: fetch(&format!("expert{i}.up_bias"), 1, b.d)?,
                });
            }
            self.experts = ExpertStack::from_experts(experts)?;
            let mut heads = Vec::with_capacity(self.gate.n_experts());
            for i in 0..self.gate.n_experts() {
                heads.push(GateHead {
                    weight: fetch(&format!("gate{i}.weight"), b.d, 1)?,
                    bias: fetch(&format!("gate{i}.bias"), 1, 1)?,
                });
            }
            self.gate = GateNet::from_heads(heads)?;
        }
        Ok(())
    }

    /// Trainable scalars in the current registry.
    pub fn param_count(&self) -> usize {
        self.to_named_params().total_len()
    }

    /// Register the mode's registry on a tape and pre-build the shared
    /// `A·B` product.
    pub fn register(&self, tape: &mut Tape<F>) -> Result<EptNodes> {
        let b = &self.budget;
        let p_short = if b.s > 0 {
            Some(tape.param("short_prompt", self.decomposed.p_short.clone())?)
        } else {
            None
        };
        let (factors, ab) = if b.r > 0 {
            let a = tape.param("factor_a", self.decomposed.a.clone())?;
            let bb = tape.param("factor_b", self.decomposed.b.clone())?;
            let ab = tape.matmul(a, bb)?;
            (Some((a, bb)), Some(ab))
        } else {
            (None, None)
        };
        let (experts, gate_heads) = if self.projection_active() {
            let mut experts = Vec::with_capacity(self.experts.n_experts());
            for (i, e) in self.experts.iter().enumerate() {
                experts.push(ExpertNodes {
                    w_down: tape.param(&format!("expert{i}.down_weight"), e.w_down.clone())?,
                    b_down: tape.param(&format!("expert{i}.down_bias"), e.b_down.clone())?,
                    w_up: tape.param(&format!("expert{i}.up_weight"), e.w_up.clone())?,
                    b_up: tape.param(&format!("expert{i}.up_bias"), e.b_up.clone())?,
                });
            }
            let mut heads = Vec::with_capacity(self.gate.n_experts());
            for (i, h) in self.gate.iter().enumerate() {
                heads.push(GateHeadNodes {
                    weight: tape.param(&format!("gate{i}.weight"), h.weight.clone())?,
                    bias: tape.param(&format!("gate{i}.bias"), h.bias.clone())?,
                });
            }
            (experts, heads)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(EptNodes {
            p_short,
            factors,
            ab,
            experts,
            gate_heads,
        })
    }
}

/// A parameter's learning-rate group: the low-rank factors train at their own
/// rate; everything else (short prompt, experts, gate) at the prompt rate.
pub fn is_lowrank_param(name: &str) -> bool {
    name.starts_with("factor_")
}

/// The reconstructed prompt `P_new` (`s×d`) under the current mode.
pub fn prompt_matrix<F: Scalar>(params: &EptParams<F>) -> Result<Matrix<F>> {
    let p_s = &params.decomposed.p_short;
    let p_f = if params.fusion_active() {
        let w = attention_weights(
            p_s,
            &params.decomposed.a,
            &params.decomposed.b,
            params.variant,
        )?;
        fuse(
            p_s,
            &w,
            &params.decomposed.a,
            &params.decomposed.b,
            params.variant,
        )?
    } else {
        p_s.clone()
    };
    if params.projection_active() {
        let p_amend = amend(p_s, &params.experts, &params.gate)?;
        reconstruct(&p_amend, &p_f)
    } else {
        Ok(p_f)
    }
}

/// Tape version of [`prompt_matrix`]; `None` when there are no prompt rows.
pub fn build_prompt<F: Scalar>(
    tape: &mut Tape<F>,
    params: &EptParams<F>,
    nodes: &EptNodes,
) -> Result<Option<NodeId>> {
    let Some(p_s) = nodes.p_short else {
        return Ok(None);
    };
    let p_f = match (params.fusion_active(), nodes.ab) {
        (true, Some(ab)) => {
            let w = build_attention(tape, p_s, ab, params.variant)?;
            build_fuse(tape, p_s, w, ab, params.variant)?
        }
        _ => p_s,
    };
    if params.projection_active() {
        let outputs: Vec<NodeId> = nodes
            .experts
            .iter()
            .map(|&e| build_expert_forward(tape, p_s, e))
            .collect::<Result<_>>()?;
        let gates = build_gate_weights(tape, p_s, &nodes.gate_heads)?;
        let p_amend = build_amend(tape, &outputs, gates)?;
        Ok(Some(tape.add(p_amend, p_f)?))
    } else {
        Ok(Some(p_f))
    }
}

/// Tape version of the embedding update: `I_up = E + A·B`, or `E` untouched
/// when there are no factors.
pub fn build_updated_embedding<F: Scalar>(
    tape: &mut Tape<F>,
    nodes: &EptNodes,
    e: NodeId,
) -> Result<NodeId> {
    match nodes.ab {
        Some(ab) => tape.add(e, ab),
        None => Ok(e),
    }
}

/// Tape version of one example's training input `[P_new; I_up]`.
pub fn build_training_input<F: Scalar>(
    tape: &mut Tape<F>,
    nodes: &EptNodes,
    p_new: Option<NodeId>,
    e: NodeId,
) -> Result<NodeId> {
    let i_up = build_updated_embedding(tape, nodes, e)?;
    match p_new {
        Some(p) => tape.concat_rows(&[p, i_up]),
        None => Ok(i_up),
    }
}

/// `[P_new; I_up]` for every example. `P_new` is computed once — it never
/// depends on the inputs.
pub fn forward<F: Scalar>(params: &EptParams<F>, e_batch: &[Matrix<F>]) -> Result<Vec<Matrix<F>>> {
    let p_new = prompt_matrix(params)?;
    e_batch
        .iter()
        .map(|e| {
            let i_up = update_input_embedding(e, &params.decomposed.a, &params.decomposed.b)?;
            if p_new.rows() == 0 {
                Ok(i_up)
            } else {
                Matrix::concat_rows(&[&p_new, &i_up])
            }
        })
        .collect()
}

/// The trained prompt with the fusion and projection networks evaluated away.
#[derive(Debug, Clone, PartialEq)]
pub struct BakedPrompt<F> {
    pub p_new: Matrix<F>,
    pub a: Matrix<F>,
    pub b: Matrix<F>,
}

impl<F: Scalar> BakedPrompt<F> {
    /// Scalars retained after baking: `s·d + m·r + r·d`.
    pub fn param_count(&self) -> usize {
        self.p_new.len() + self.a.len() + self.b.len()
    }
}

/// Evaluate `P_new` once and keep only it and the factors.
pub fn bake<F: Scalar>(params: &EptParams<F>) -> Result<BakedPrompt<F>> {
    Ok(BakedPrompt {
        p_new: prompt_matrix(params)?,
        a: params.decomposed.a.clone(),
        b: params.decomposed.b.clone(),
    })
}

/// Inference with a baked prompt: identical kernel sequence to [`forward`],
/// minus the prompt reconstruction.
pub fn baked_forward<F: Scalar>(
    baked: &BakedPrompt<F>,
    e_batch: &[Matrix<F>],
) -> Result<Vec<Matrix<F>>> {
    e_batch
        .iter()
        .map(|e| {
            let i_up = update_input_embedding(e, &baked.a, &baked.b)?;
            if baked.p_new.rows() == 0 {
                Ok(i_up)
            } else {
                Matrix::concat_rows(&[&baked.p_new, &i_up])
            }
        })
        .collect()
}
