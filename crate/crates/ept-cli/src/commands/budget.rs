//! `budget` — solve the rank that keeps a decomposed prompt at the same
//! trainable-parameter count as the undecomposed one, and report the
//! parameter arithmetic.

use std::path::Path;

use ept_core::PromptBudget;

use crate::config::Config;
use crate::error::CliResult;
use crate::output::write_json;

pub fn solve_from_config(cfg: &Config) -> CliResult<(PromptBudget, serde_json::Value)> {
    let l = cfg.usize("budget.l", 15)?;
    let s = cfg.usize("budget.s", 9)?;
    let m = cfg.usize("budget.m", 16)?;
    let d = cfg.usize("budget.d", 32)?;
    let budget = PromptBudget::solve(l, s, m, d, cfg.budget_mode()?)?;
    let report = serde_json::json!({
        "l": budget.l,
        "s": budget.s,
        "m": budget.m,
        "d": budget.d,
        "r": budget.r,
        "slack": budget.slack,
        "source_params": budget.source_params(),
        "decomposed_params": budget.decomposed_params(),
        "config_hash": cfg.hash(),
    });
    Ok((budget, report))
}

pub fn run(cfg: &Config, out: Option<&Path>) -> CliResult<()> {
    let (_, report) = solve_from_config(cfg)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("serializable")
    );
    if let Some(dir) = out {
        write_json(&dir.join("budget.json"), &report)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn cfg(pairs: &[(&str, &str)]) -> Config {
        Config::from_entries(
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<BTreeMap<_, _>>(),
        )
    }

    #[test]
    fn paper_scale_pairs_solve_exactly() {
        let (b, report) = solve_from_config(&cfg(&[
            ("budget.l", "100"),
            ("budget.s", "60"),
            ("budget.m", "256"),
            ("budget.d", "768"),
        ]))
        .unwrap();
        assert_eq!(b.r, 30);
        assert_eq!(report["source_params"], 76_800);
        assert_eq!(report["decomposed_params"], 76_800);
    }

    #[test]
    fn non_integral_budget_propagates_the_core_error() {
        let err = solve_from_config(&cfg(&[
            ("budget.l", "100"),
            ("budget.s", "59"),
            ("budget.m", "256"),
            ("budget.d", "768"),
        ]))
        .unwrap_err();
        assert_eq!(crate::error::exit_code(&err), 2);
    }
}
