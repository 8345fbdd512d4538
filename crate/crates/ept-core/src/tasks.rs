//! Synthetic classification tasks of graded difficulty.
//!
//! Three binary tasks over content-token sequences, each generated balanced
//! and fully seeded:
//!
//! * **marked-parity** — the marked token appears once or twice; the label is
//!   the parity of that count.
//! * **majority-half** — tokens are drawn from the lower or upper half of the
//!   content vocabulary with a clear margin; the label says which half
//!   dominates.
//! * **contains-pattern** — the label says whether a fixed two-token pattern
//!   occurs adjacently.
//!
//! [`kshot_subsample`] cuts a training split down to exactly `k` examples
//! per class while leaving the evaluation split untouched.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::corpus::FIRST_CONTENT_TOKEN;
use crate::error::{EptError, Result};
use crate::rng::{derive_seed, rng_from_seed, sample_without_replacement, SeededRng};

/// Token whose occurrence count the parity task labels.
pub const MARKED_TOKEN: usize = FIRST_CONTENT_TOKEN;
/// Adjacent pair the pattern task looks for.
pub const PATTERN: (usize, usize) = (FIRST_CONTENT_TOKEN + 1, FIRST_CONTENT_TOKEN + 2);
/// Majority margin: the dominant half contributes at least this many tokens
/// more than the other half.
pub const MAJORITY_MARGIN: usize = 4;

/// One labeled sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub label: usize,
}

/// A train/eval split of labeled sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub name: String,
    pub n_classes: usize,
    pub train: Vec<Example>,
    pub eval: Vec<Example>,
}

/// The three shipped tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    MarkedParity,
    MajorityHalf,
    ContainsPattern,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::MarkedParity,
        TaskKind::MajorityHalf,
        TaskKind::ContainsPattern,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::MarkedParity => "marked-parity",
            TaskKind::MajorityHalf => "majority-half",
            TaskKind::ContainsPattern => "contains-pattern",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = EptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marked-parity" => Ok(TaskKind::MarkedParity),
            "majority-half" => Ok(TaskKind::MajorityHalf),
            "contains-pattern" => Ok(TaskKind::ContainsPattern),
            other => Err(EptError::Contract(format!(
                "unknown task '{other}' (expected marked-parity, majority-half, \
                 or contains-pattern)"
            ))),
        }
    }
}

/// Generation knobs shared by all tasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskConfig {
    pub vocab_size: usize,
    /// Every generated sequence has exactly this many tokens.
    pub seq_len: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            vocab_size: 64,
            seq_len: 16,
            n_train: 128,
            n_eval: 64,
            seed: 0,
        }
    }
}

impl TaskConfig {
    fn validate(&self) -> Result<()> {
        if self.vocab_size < 16 {
            return Err(EptError::Data(format!(
                "task generation needs a vocabulary of at least 16, got {}",
                self.vocab_size
            )));
        }
        if self.seq_len < MAJORITY_MARGIN + 2 {
            return Err(EptError::Data(format!(
                "sequences of {} tokens are too short for the task suite",
                self.seq_len
            )));
        }
        if self.n_train == 0 || self.n_eval == 0 || self.n_train % 2 != 0 || self.n_eval % 2 != 0 {
            return Err(EptError::Data(format!(
                "split sizes must be positive and even for balance, got {} / {}",
                self.n_train, self.n_eval
            )));
        }
        Ok(())
    }

    fn content_tokens(&self) -> Vec<usize> {
        (FIRST_CONTENT_TOKEN..self.vocab_size).collect()
    }

    /// Lower and upper halves of the content vocabulary.
    fn halves(&self) -> (Vec<usize>, Vec<usize>) {
        let content = self.content_tokens();
        let mid = content.len() / 2;
        (content[..mid].to_vec(), content[mid..].to_vec())
    }
}

fn has_pattern(tokens: &[usize]) -> bool {
    tokens
        .windows(2)
        .any(|w| w[0] == PATTERN.0 && w[1] == PATTERN.1)
}

fn gen_example(kind: TaskKind, cfg: &TaskConfig, label: usize, rng: &mut SeededRng) -> Example {
    let len = cfg.seq_len;
    let tokens = match kind {
        TaskKind::MarkedParity => {
            let background: Vec<usize> = cfg
                .content_tokens()
                .into_iter()
                .filter(|&t| t != MARKED_TOKEN)
                .collect();
            let mut tokens: Vec<usize> = (0..len)
                .map(|_| background[rng.gen_range(0..background.len())])
                .collect();
            let copies = if label == 1 { 1 } else { 2 };
            for p in sample_without_replacement(len, copies, rng) {
                tokens[p] = MARKED_TOKEN;
            }
            tokens
        }
        TaskKind::MajorityHalf => {
            let (lo, hi) = cfg.halves();
            let (major, minor) = if label == 1 { (&hi, &lo) } else { (&lo, &hi) };
            let floor = len / 2 + MAJORITY_MARGIN / 2;
            let n_major = rng.gen_range(floor..=(len - 2).max(floor));
            let mut tokens: Vec<usize> = Vec::with_capacity(len);
            for _ in 0..n_major {
                tokens.push(major[rng.gen_range(0..major.len())]);
            }
            for _ in n_major..len {
                tokens.push(minor[rng.gen_range(0..minor.len())]);
            }
            tokens.shuffle(rng);
            tokens
        }
        TaskKind::ContainsPattern => {
            let content = cfg.content_tokens();
            let mut tokens: Vec<usize>;
            loop {
                tokens = (0..len)
                    .map(|_| content[rng.gen_range(0..content.len())])
                    .collect();
                if !has_pattern(&tokens) {
                    break;
                }
            }
            if label == 1 {
                let p = rng.gen_range(0..len - 1);
                tokens[p] = PATTERN.0;
                tokens[p + 1] = PATTERN.1;
            }
            tokens
        }
    };
    Example { tokens, label }
}

fn gen_split(kind: TaskKind, cfg: &TaskConfig, n: usize, rng: &mut SeededRng) -> Vec<Example> {
    (0..n).map(|i| gen_example(kind, cfg, i % 2, rng)).collect()
}

/// Generate a balanced, seeded train/eval split for one task.
pub fn make_task(kind: TaskKind, cfg: &TaskConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut train_rng = rng_from_seed(derive_seed(cfg.seed, &format!("{kind}-train")));
    let mut eval_rng = rng_from_seed(derive_seed(cfg.seed, &format!("{kind}-eval")));
    Ok(LabeledDataset {
        name: kind.as_str().to_string(),
        n_classes: 2,
        train: gen_split(kind, cfg, cfg.n_train, &mut train_rng),
        eval: gen_split(kind, cfg, cfg.n_eval, &mut eval_rng),
    })
}

/// Keep a seeded draw of exactly `k` training examples per class; the
/// evaluation split is passed through untouched.
pub fn kshot_subsample(task: &LabeledDataset, k: usize, seed: u64) -> Result<LabeledDataset> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in 0..task.n_classes {
        by_class.insert(c, Vec::new());
    }
    for (i, ex) in task.train.iter().enumerate() {
        by_class.entry(ex.label).or_default().push(i);
    }
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::with_capacity(k * task.n_classes);
    for (class, idxs) in &by_class {
        if idxs.len() < k {
            return Err(EptError::Data(format!(
                "class {class} has only {} training examples, need {k}",
                idxs.len()
            )));
        }
        let picks = sample_without_replacement(idxs.len(), k, &mut rng);
        train.extend(picks.into_iter().map(|p| task.train[idxs[p]].clone()));
    }
    Ok(LabeledDataset {
        name: task.name.clone(),
        n_classes: task.n_classes,
        train,
        eval: task.eval.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(seq: &[usize], t: usize) -> usize {
        seq.iter().filter(|&&x| x == t).count()
    }

    #[test]
    fn splits_are_balanced_and_sized() {
        for kind in TaskKind::ALL {
            let task = make_task(kind, &TaskConfig::default()).unwrap();
            assert_eq!(task.train.len(), 128);
            assert_eq!(task.eval.len(), 64);
            for split in [&task.train, &task.eval] {
                let ones = split.iter().filter(|e| e.label == 1).count();
                assert_eq!(ones * 2, split.len(), "{kind}: unbalanced split");
            }
        }
    }

    #[test]
    fn labels_match_independent_predicates() {
        let cfg = TaskConfig::default();
        for kind in TaskKind::ALL {
            let task = make_task(kind, &cfg).unwrap();
            for ex in task.train.iter().chain(&task.eval) {
                assert_eq!(ex.tokens.len(), cfg.seq_len);
                for &t in &ex.tokens {
                    assert!((FIRST_CONTENT_TOKEN..cfg.vocab_size).contains(&t));
                }
                match kind {
                    TaskKind::MarkedParity => {
                        let c = count(&ex.tokens, MARKED_TOKEN);
                        assert!(c == 1 || c == 2);
                        assert_eq!(ex.label, c % 2);
                    }
                    TaskKind::MajorityHalf => {
                        let (lo, hi) = cfg.halves();
                        let n_lo: usize = lo.iter().map(|&t| count(&ex.tokens, t)).sum();
                        let n_hi: usize = hi.iter().map(|&t| count(&ex.tokens, t)).sum();
                        assert_eq!(ex.label, usize::from(n_hi > n_lo));
                        assert!(
                            n_lo.abs_diff(n_hi) >= MAJORITY_MARGIN,
                            "margin too small: {n_lo} vs {n_hi}"
                        );
                    }
                    TaskKind::ContainsPattern => {
                        assert_eq!(ex.label, usize::from(has_pattern(&ex.tokens)));
                    }
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let cfg = TaskConfig::default();
        let a = make_task(TaskKind::MajorityHalf, &cfg).unwrap();
        let b = make_task(TaskKind::MajorityHalf, &cfg).unwrap();
        let c = make_task(
            TaskKind::MajorityHalf,
            &TaskConfig {
                seed: 1,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn tasks_differ_from_each_other() {
        let cfg = TaskConfig::default();
        let parity = make_task(TaskKind::MarkedParity, &cfg).unwrap();
        let pattern = make_task(TaskKind::ContainsPattern, &cfg).unwrap();
        assert_ne!(parity.train, pattern.train);
    }

    #[test]
    fn kshot_draws_exactly_k_per_class() {
        let task = make_task(TaskKind::ContainsPattern, &TaskConfig::default()).unwrap();
        let few = kshot_subsample(&task, 4, 9).unwrap();
        assert_eq!(few.train.len(), 8);
        for c in 0..2 {
            assert_eq!(few.train.iter().filter(|e| e.label == c).count(), 4);
        }
        assert_eq!(few.eval, task.eval);
        for ex in &few.train {
            assert!(task.train.contains(ex));
        }
    }

    #[test]
    fn kshot_is_deterministic_and_full_k_recovers_the_split() {
        let task = make_task(TaskKind::MarkedParity, &TaskConfig::default()).unwrap();
        let a = kshot_subsample(&task, 16, 3).unwrap();
        let b = kshot_subsample(&task, 16, 3).unwrap();
        assert_eq!(a, b);
        let c = kshot_subsample(&task, 16, 4).unwrap();
        assert_ne!(a.train, c.train);

        let full = kshot_subsample(&task, 64, 5).unwrap();
        let mut got = full.train.clone();
        let mut want = task.train.clone();
        let key = |e: &Example| (e.label, e.tokens.clone());
        got.sort_by_key(key);
        want.sort_by_key(key);
        assert_eq!(got, want);
    }

    #[test]
    fn kshot_rejects_an_undersized_class() {
        let task = make_task(TaskKind::MajorityHalf, &TaskConfig::default()).unwrap();
        let err = kshot_subsample(&task, 65, 0).unwrap_err();
        assert!(err.to_string().contains("class 0"), "got: {err}");
    }

    #[test]
    fn bad_configs_are_rejected() {
        let cfg = TaskConfig::default();
        assert!(make_task(
            TaskKind::MarkedParity,
            &TaskConfig {
                n_train: 7,
                ..cfg.clone()
            }
        )
        .is_err());
        assert!(make_task(
            TaskKind::MarkedParity,
            &TaskConfig {
                vocab_size: 8,
                ..cfg.clone()
            }
        )
        .is_err());
        assert!(make_task(TaskKind::MajorityHalf, &TaskConfig { seq_len: 4, ..cfg }).is_err());
    }
}
