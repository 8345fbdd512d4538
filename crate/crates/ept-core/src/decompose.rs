//! Decomposing a source prompt into a short prompt plus low-rank factors.
//!
//! The source prompt `P` (`l×d`) is split budget-neutrally into its first `s`
//! rows (the trainable short prompt) and a rank-`r` pair `(A, B)` whose
//! product updates the frozen input-embedding table. `A` and `B` come from
//! the SVD of the row-aligned source prompt, so the update starts as the best
//! rank-`r` approximation of the prompt's content rather than noise.

use crate::budget::PromptBudget;
use crate::error::{EptError, Result};
use crate::matrix::Matrix;
use crate::rng::{rng_from_seed, sample_without_replacement};
use crate::scalar::Scalar;
use crate::svd::truncated_svd;

/// Source prompts are seeded from the embedding rows of the most common
/// tokens; this caps how deep into the vocabulary the draw may reach.
pub const INIT_POOL_LIMIT: usize = 5000;

/// A budget-conforming split of the source prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedPrompt<F> {
    /// First `s` rows of the source prompt; trainable.
    pub p_short: Matrix<F>,
    /// Left factor, `m×r`; trainable.
    pub a: Matrix<F>,
    /// Right factor, `r×d`; trainable.
    pub b: Matrix<F>,
}

impl<F: Scalar> DecomposedPrompt<F> {
    /// Trainable scalars: `s·d + m·r + r·d`.
    pub fn param_count(&self) -> usize {
        self.p_short.len() + self.a.len() + self.b.len()
    }
}

/// Draw `l` distinct embedding rows (seeded, without replacement) from the
/// head of the vocabulary table.
pub fn init_source_prompt<F: Scalar>(
    vocab_embeddings: &Matrix<F>,
    l: usize,
    seed: u64,
) -> Result<Matrix<F>> {
    let pool = vocab_embeddings.rows().min(INIT_POOL_LIMIT);
    if pool < l {
        return Err(EptError::VocabTooSmall {
            needed: l,
            available: pool,
        });
    }
    let mut rng = rng_from_seed(seed);
    let picks = sample_without_replacement(pool, l, &mut rng);
    let rows: Vec<Matrix<F>> = picks
        .iter()
        .map(|&i| vocab_embeddings.slice_rows(i, 1))
        .collect();
    let refs: Vec<&Matrix<F>> = rows.iter().collect();
    Matrix::concat_rows(&refs)
}

/// Resize an `l×d` matrix to `m×d`: cyclic row repetition when `l < m`,
/// prefix truncation when `l > m`, identity when equal.
pub fn align_rows<F: Scalar>(p: &Matrix<F>, m: usize) -> Matrix<F> {
    let l = p.rows();
    if l == m {
        return p.clone();
    }
    if l > m {
        return p.slice_rows(0, m);
    }
    let mut out = Matrix::zeros(m, p.cols());
    for i in 0..m {
        let src = i % l;
        for j in 0..p.cols() {
            out.set(i, j, p.get(src, j));
        }
    }
    out
}

/// Split `p` per the budget: short prompt = first `s` rows, factors = top-`r`
/// SVD of the aligned prompt. `r = 0` leaves the factors empty and the short
/// prompt bit-identical to `p`.
pub fn decompose<F: Scalar>(p: &Matrix<F>, budget: &PromptBudget) -> Result<DecomposedPrompt<F>> {
    if p.shape() != (budget.l, budget.d) {
        return Err(EptError::InvalidBudget {
            l: budget.l,
            s: budget.s,
            r: budget.r,
            m: budget.m,
            d: budget.d,
            reason: format!(
                "source prompt is {}x{}, budget expects {}x{}",
                p.rows(),
                p.cols(),
                budget.l,
                budget.d
            ),
        });
    }
    let p_short = p.slice_rows(0, budget.s);
    let (a, b) = if budget.r == 0 {
        (Matrix::zeros(budget.m, 0), Matrix::zeros(0, budget.d))
    } else {
        let aligned = align_rows(p, budget.m);
        truncated_svd(&aligned, budget.r)?
    };
    Ok(DecomposedPrompt { p_short, a, b })
}

/// `I_up = E + A·B` with `E` frozen. With empty factors the table is returned
/// bit-identical (the additive path is skipped entirely, so even signed
/// zeros survive).
pub fn update_input_embedding<F: Scalar>(
    e: &Matrix<F>,
    a: &Matrix<F>,
    b: &Matrix<F>,
) -> Result<Matrix<F>> {
    if a.cols() == 0 && b.rows() == 0 {
        if a.rows() != e.rows() || b.cols() != e.cols() {
            return Err(EptError::ShapeMismatch {
                op: "update_input_embedding",
                left_rows: e.rows(),
                left_cols: e.cols(),
                right_rows: a.rows(),
                right_cols: b.cols(),
            });
        }
        return Ok(e.clone());
    }
    e.add(&a.matmul(b)?)
}
