//! Experiment configuration: one flat text file of dotted keys, with every
//! value overridable on the command line by a flag of the same name.
//!
//! File format: `key = value` lines, `#` comments, blank lines ignored.
//! Overrides arrive as `--section.key value` (or `--section.key=value`)
//! tokens and are applied in order after the file. Unknown keys are
//! rejected up front so a typo cannot silently fall back to a default.
//!
//! The config hash — SHA-256 of the sorted `key = value` listing — is
//! stamped into every output table so any result row can be traced to the
//! exact configuration that produced it.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use ept_core::io::content_hash_hex;
use ept_core::optim::OptimizerKind;
use ept_core::{BudgetMode, EncoderConfig, FusionVariant, TaskConfig, TaskKind, TrainConfig};

use crate::error::{config_err, CliResult};

/// Every key the harness understands, sorted for binary search.
const KNOWN_KEYS: &[&str] = &[
    "ablate.tasks",
    "budget.d",
    "budget.l",
    "budget.m",
    "budget.mode",
    "budget.s",
    "encoder.checkpoint",
    "encoder.d_model",
    "encoder.ffn_width",
    "encoder.max_prompt",
    "encoder.max_seq",
    "encoder.n_classes",
    "encoder.n_heads",
    "encoder.n_layers",
    "encoder.seed",
    "encoder.vocab_size",
    "gradcheck.seed",
    "gradcheck.shapes",
    "grid.lr_lowrank",
    "grid.lr_prompt",
    "kshot.k",
    "kshot.seed",
    "pipeline.checkpoint",
    "pipeline.n_experts",
    "pipeline.seed",
    "pipeline.use_fusion",
    "pipeline.use_projection",
    "pipeline.variant",
    "pretrain.chain_seed",
    "pretrain.corpus_size",
    "pretrain.heldout_sample_seed",
    "pretrain.heldout_size",
    "pretrain.max_len",
    "pretrain.min_len",
    "pretrain.sample_seed",
    "pretrain.steps",
    "seeds",
    "spaces.max",
    "spaces.min",
    "spaces.tasks",
    "sweep.lengths",
    "task.kind",
    "task.n_eval",
    "task.n_train",
    "task.seed",
    "train.batch_size",
    "train.eval_every",
    "train.lr_lowrank",
    "train.lr_prompt",
    "train.optimizer",
    "train.seed",
    "train.steps",
    "transfer.k",
    "transfer.source_steps",
    "transfer.source_task",
    "transfer.target_task",
];

/// Whether `name` is a config key the harness understands — and therefore
/// a valid `--name value` override on any subcommand.
pub fn is_known_key(name: &str) -> bool {
    KNOWN_KEYS.binary_search(&name).is_ok()
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn from_entries(entries: BTreeMap<String, String>) -> Self {
        Config { entries }
    }

    /// Parse the optional config file, then apply overrides in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                config_err(format!("cannot read config file {}: {e}", path.display()))
            })?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(config_err(format!(
                        "{}:{}: expected 'key = value', got '{line}'",
                        path.display(),
                        lineno + 1
                    )));
                };
                entries.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        for (key, value) in overrides {
            entries.insert(key.clone(), value.clone());
        }
        let cfg = Config { entries };
        cfg.reject_unknown_keys()?;
        Ok(cfg)
    }

    fn reject_unknown_keys(&self) -> CliResult<()> {
        for key in self.entries.keys() {
            if !is_known_key(key) {
                return Err(config_err(format!("unknown config key '{key}'")));
            }
        }
        Ok(())
    }

    /// Sorted `key = value` listing; what the hash covers and what
    /// `config.txt` contains for exact re-runs.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> String {
        content_hash_hex(self.canonical_text().as_bytes())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T, kind: &str) -> CliResult<T> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| config_err(format!("{key} = '{raw}' is not {kind}"))),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> CliResult<usize> {
        self.parsed(key, default, "a non-negative integer")
    }

    pub fn u64(&self, key: &str, default: u64) -> CliResult<u64> {
        self.parsed(key, default, "a non-negative integer")
    }

    pub fn f64(&self, key: &str, default: f64) -> CliResult<f64> {
        self.parsed(key, default, "a number")
    }

    pub fn bool(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.entries.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(raw) => Err(config_err(format!(
                "{key} = '{raw}' is not a boolean (true or false)"
            ))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: &[T], kind: &str) -> CliResult<Vec<T>>
    where
        T: Clone,
    {
        match self.entries.get(key) {
            None => Ok(default.to_vec()),
            Some(raw) => raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| config_err(format!("{key}: '{s}' is not {kind}")))
                })
                .collect(),
        }
    }

    pub fn seeds(&self) -> CliResult<Vec<u64>> {
        let seeds = self.list("seeds", &[0u64, 1, 2, 3, 4], "a seed")?;
        if seeds.is_empty() {
            return Err(config_err("seeds list is empty"));
        }
        Ok(seeds)
    }

    pub fn usize_list(&self, key: &str, default: &[usize]) -> CliResult<Vec<usize>> {
        self.list(key, default, "a non-negative integer")
    }

    pub fn f64_list(&self, key: &str, default: &[f64]) -> CliResult<Vec<f64>> {
        self.list(key, default, "a number")
    }

    pub fn task_kinds(&self, key: &str) -> CliResult<Vec<TaskKind>> {
        self.list(key, &TaskKind::ALL, "a task name")
    }

    pub fn task_kind(&self, key: &str, default: TaskKind) -> CliResult<TaskKind> {
        self.parsed(key, default, "a task name")
    }

    pub fn variant(&self) -> CliResult<FusionVariant> {
        self.parsed(
            "pipeline.variant",
            FusionVariant::CrossAttention,
            "a fusion variant (cross_attention or literal_einsum)",
        )
    }

    pub fn budget_mode(&self) -> CliResult<BudgetMode> {
        match self.entries.get("budget.mode").map(String::as_str) {
            None | Some("exact") => Ok(BudgetMode::Exact),
            Some("floor") => Ok(BudgetMode::Floor),
            Some(raw) => Err(config_err(format!(
                "budget.mode = '{raw}' is not a budget mode (exact or floor)"
            ))),
        }
    }

    pub fn encoder_config(&self) -> CliResult<EncoderConfig> {
        let base = EncoderConfig::default();
        Ok(EncoderConfig {
            d_model: self.usize("encoder.d_model", base.d_model)?,
            n_layers: self.usize("encoder.n_layers", base.n_layers)?,
            n_heads: self.usize("encoder.n_heads", base.n_heads)?,
            ffn_width: self.usize("encoder.ffn_width", base.ffn_width)?,
            vocab_size: self.usize("encoder.vocab_size", base.vocab_size)?,
            max_seq: self.usize("encoder.max_seq", base.max_seq)?,
            max_prompt: self.usize("encoder.max_prompt", base.max_prompt)?,
            n_classes: self.usize("encoder.n_classes", base.n_classes)?,
            seed: self.u64("encoder.seed", base.seed)?,
        })
    }

    /// Task geometry is pinned to the encoder: vocabulary and sequence
    /// length come from the backbone, not from separate keys.
    pub fn task_config(&self, enc: &EncoderConfig, seed_offset: u64) -> CliResult<TaskConfig> {
        let base = TaskConfig::default();
        Ok(TaskConfig {
            vocab_size: enc.vocab_size,
            seq_len: enc.max_seq,
            n_train: self.usize("task.n_train", base.n_train)?,
            n_eval: self.usize("task.n_eval", base.n_eval)?,
            seed: self.u64("task.seed", base.seed)? + seed_offset,
        })
    }

    pub fn train_config(&self, seed_offset: u64) -> CliResult<TrainConfig> {
        let base = TrainConfig::default();
        let optimizer = match self.entries.get("train.optimizer") {
            None => OptimizerKind::Adam,
            Some(raw) => raw
                .parse()
                .map_err(|_| config_err(format!("train.optimizer = '{raw}' is not adam or sgd")))?,
        };
        Ok(TrainConfig {
            steps: self.usize("train.steps", base.steps)?,
            batch_size: self.usize("train.batch_size", base.batch_size)?,
            lr_prompt: self.f64("train.lr_prompt", base.lr_prompt)?,
            lr_lowrank: self.f64("train.lr_lowrank", base.lr_lowrank)?,
            optimizer,
            seed: self.u64("train.seed", base.seed)? + seed_offset,
            eval_every: self.usize("train.eval_every", base.eval_every)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(pairs: &[(&str, &str)]) -> Config {
        Config::from_entries(
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    #[test]
    fn known_keys_are_sorted_for_binary_search() {
        let mut sorted = KNOWN_KEYS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, KNOWN_KEYS);
    }

    #[test]
    fn file_plus_overrides_and_precedence() {
        let dir = std::env::temp_dir().join(format!("ept-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("base.cfg");
        std::fs::write(
            &path,
            "# comment\n\ntrain.steps = 100\ntask.kind = marked-parity\n",
        )
        .unwrap();
        let overrides = vec![("train.steps".to_string(), "250".to_string())];
        let cfg = Config::load(Some(&path), &overrides).unwrap();
        assert_eq!(cfg.usize("train.steps", 0).unwrap(), 250);
        assert_eq!(cfg.get("task.kind"), Some("marked-parity"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::load(None, &[("train.stepz".to_string(), "5".to_string())]).unwrap_err();
        assert!(err.to_string().contains("train.stepz"), "got: {err}");
    }

    #[test]
    fn bad_values_name_the_key() {
        let c = cfg(&[("train.lr_prompt", "fast")]);
        let err = c.train_config(0).unwrap_err();
        assert!(err.to_string().contains("train.lr_prompt"), "got: {err}");
    }

    #[test]
    fn hash_tracks_content_not_insertion_order() {
        let a = cfg(&[("task.kind", "majority-half"), ("train.steps", "7")]);
        let b = cfg(&[("train.steps", "7"), ("task.kind", "majority-half")]);
        assert_eq!(a.hash(), b.hash());
        let c = cfg(&[("train.steps", "8"), ("task.kind", "majority-half")]);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn defaults_flow_from_the_core_types() {
        let c = cfg(&[]);
        let enc = c.encoder_config().unwrap();
        assert_eq!(enc, EncoderConfig::default());
        let t = c.task_config(&enc, 3).unwrap();
        assert_eq!(t.vocab_size, enc.vocab_size);
        assert_eq!(t.seq_len, enc.max_seq);
        assert_eq!(t.seed, TaskConfig::default().seed + 3);
        let tr = c.train_config(2).unwrap();
        assert_eq!(tr.steps, TrainConfig::default().steps);
        assert_eq!(tr.seed, TrainConfig::default().seed + 2);
        assert_eq!(c.seeds().unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn lists_parse_comma_separated_values() {
        let c = cfg(&[("sweep.lengths", "0, 3,6"), ("grid.lr_prompt", "0.3,0.5")]);
        assert_eq!(c.usize_list("sweep.lengths", &[]).unwrap(), vec![0, 3, 6]);
        assert_eq!(c.f64_list("grid.lr_prompt", &[]).unwrap(), vec![0.3, 0.5]);
        assert_eq!(
            c.task_kinds("ablate.tasks").unwrap(),
            TaskKind::ALL.to_vec()
        );
    }
}
