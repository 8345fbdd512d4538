//! Parameter-budget bookkeeping for decomposed prompts.
//!
//! A source prompt of length `l` over embedding width `d` holds `l·d`
//! trainable values. Decomposition replaces it with a short prompt of length
//! `s` plus a rank-`r` update to an `m`-row embedding table, costing
//! `s·d + (m + d)·r`. The budget equation `l·d = s·d + (m + d)·r` fixes the
//! rank that keeps the two parameter counts equal.

use crate::error::{EptError, Result};

/// How to resolve the rank when the budget equation has no integer solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetMode {
    /// Require `(l - s)·d` to be divisible by `m + d`; error otherwise.
    Exact,
    /// Round the rank down and report the leftover parameters as slack.
    Floor,
}

/// A resolved budget: dimensions plus the rank and slack they imply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptBudget {
    /// Source prompt length.
    pub l: usize,
    /// Short prompt length, `0..=l`.
    pub s: usize,
    /// Embedding table rows receiving the low-rank update.
    pub m: usize,
    /// Embedding width.
    pub d: usize,
    /// Low-rank update rank.
    pub r: usize,
    /// Unspent parameters (`0` in exact mode, `< m + d` in floor mode).
    pub slack: usize,
}

impl PromptBudget {
    /// Solve the budget equation for `r` given the other four dimensions.
    pub fn solve(l: usize, s: usize, m: usize, d: usize, mode: BudgetMode) -> Result<Self> {
        if d == 0 || m == 0 || l == 0 {
            return Err(EptError::InvalidBudget {
                l,
                s,
                r: 0,
                m,
                d,
                reason: "l, m, and d must all be positive".to_string(),
            });
        }
        if s > l {
            return Err(EptError::InvalidBudget {
                l,
                s,
                r: 0,
                m,
                d,
                reason: "short length exceeds source length".to_string(),
            });
        }
        let freed = (l - s) * d;
        let per_rank = m + d;
        let r = freed / per_rank;
        let slack = freed % per_rank;
        if r > m.min(d) {
            return Err(EptError::InvalidBudget {
                l,
                s,
                r,
                m,
                d,
                reason: format!("rank exceeds min(m, d) = {}", m.min(d)),
            });
        }
        match mode {
            BudgetMode::Floor => Ok(PromptBudget {
                l,
                s,
                m,
                d,
                r,
                slack,
            }),
            BudgetMode::Exact => {
                if slack == 0 {
                    Ok(PromptBudget {
                        l,
                        s,
                        m,
                        d,
                        r,
                        slack,
                    })
                } else {
                    let (nearest_below, nearest_above) = nearest_exact_lengths(l, s, m, d);
                    Err(EptError::BudgetNotIntegral {
                        l,
                        s,
                        m,
                        d,
                        nearest_below,
                        nearest_above,
                    })
                }
            }
        }
    }

    /// Trainable parameters spent by the decomposed form.
    pub fn decomposed_params(&self) -> usize {
        self.s * self.d + (self.m + self.d) * self.r
    }

    /// Trainable parameters of the undecomposed source prompt.
    pub fn source_params(&self) -> usize {
        self.l * self.d
    }
}

/// Closest short lengths on either side of `s` (inclusive of 0 and `l`) for
/// which the budget equation has an integer rank. `s = l` always qualifies
/// (rank 0), so the upper candidate exists whenever `s < l`.
fn nearest_exact_lengths(l: usize, s: usize, m: usize, d: usize) -> (Option<usize>, Option<usize>) {
    let fits = |cand: usize| (l - cand) * d % (m + d) == 0;
    let below = (0..s).rev().find(|&c| fits(c));
    let above = ((s + 1)..=l).find(|&c| fits(c));
    (below, above)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_ranks() {
        // 100 prompt rows at width 768 against a 256-row table.
        let b = PromptBudget::solve(100, 60, 256, 768, BudgetMode::Exact).unwrap();
        assert_eq!(b.r, 30);
        assert_eq!(b.slack, 0);
        assert_eq!(b.decomposed_params(), 76_800);
        assert_eq!(b.source_params(), 76_800);

        let b = PromptBudget::solve(100, 40, 256, 768, BudgetMode::Exact).unwrap();
        assert_eq!(b.r, 45);
        assert_eq!(b.decomposed_params(), b.source_params());
    }

    #[test]
    fn exact_mode_conserves_parameters() {
        for s in [0, 20, 40, 60, 80, 100] {
            let b = PromptBudget::solve(100, s, 256, 768, BudgetMode::Exact).unwrap();
            assert_eq!(b.decomposed_params(), b.source_params(), "s={s}");
        }
    }

    #[test]
    fn degenerate_lengths() {
        let b = PromptBudget::solve(100, 100, 256, 768, BudgetMode::Exact).unwrap();
        assert_eq!(b.r, 0);
        let b = PromptBudget::solve(100, 0, 256, 768, BudgetMode::Exact).unwrap();
        assert_eq!(b.r, 75);
        assert_eq!(b.decomposed_params(), 76_800);
    }

    #[test]
    fn non_integral_budget_reports_neighbors() {
        // (100 - 59)·768 = 31488, and 31488 mod 1024 = 768 ≠ 0.
        let err = PromptBudget::solve(100, 59, 256, 768, BudgetMode::Exact).unwrap_err();
        match err {
            EptError::BudgetNotIntegral {
                nearest_below,
                nearest_above,
                ..
            } => {
                // Valid lengths here are multiples of 4 offsets: s ≡ 100 mod 4... check 56 and 60.
                assert_eq!(nearest_below, Some(56));
                assert_eq!(nearest_above, Some(60));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn floor_mode_accounts_for_every_parameter() {
        let b = PromptBudget::solve(100, 59, 256, 768, BudgetMode::Floor).unwrap();
        assert!(b.slack > 0 && b.slack < b.m + b.d);
        assert_eq!(b.decomposed_params() + b.slack, b.source_params());
    }

    #[test]
    fn floor_rank_never_increases_with_s() {
        let mut prev = usize::MAX;
        for s in 0..=100 {
            let b = PromptBudget::solve(100, s, 256, 768, BudgetMode::Floor).unwrap();
            assert!(b.r <= prev, "rank rose from {prev} to {} at s={s}", b.r);
            prev = b.r;
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(PromptBudget::solve(10, 11, 4, 8, BudgetMode::Floor).is_err());
        assert!(PromptBudget::solve(0, 0, 4, 8, BudgetMode::Floor).is_err());
        assert!(PromptBudget::solve(10, 5, 0, 8, BudgetMode::Floor).is_err());
        assert!(PromptBudget::solve(10, 5, 4, 0, BudgetMode::Floor).is_err());
    }

    #[test]
    fn rank_above_min_dimension_is_rejected() {
        // l=50, s=0, m=2, d=8: floor rank = 400/10 = 40 > min(2, 8).
        let err = PromptBudget::solve(50, 0, 2, 8, BudgetMode::Floor).unwrap_err();
        assert!(err.to_string().contains("rank exceeds"), "{err}");
    }

    #[test]
    fn desk_scale_sweep_is_exact() {
        // The toy geometry used across the test suite: every third length
        // divides evenly because (m + d) = 48 and d·3 = 96.
        for (s, want_r) in [(0, 10), (3, 8), (6, 6), (9, 4), (12, 2), (15, 0)] {
            let b = PromptBudget::solve(15, s, 16, 32, BudgetMode::Exact).unwrap();
            assert_eq!(b.r, want_r, "s={s}");
            assert_eq!(b.decomposed_params(), 480);
        }
    }
}
