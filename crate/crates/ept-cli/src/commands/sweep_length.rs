//! `sweep-length` — trade-off sweep over the retained prompt length `s`
//! at a fixed trainable-parameter budget: as `s` grows the factor rank
//! `r` shrinks, trading sequence-length cost against factor capacity.
//!
//! The result table records each desk-scale `(s, r)` pair alongside its
//! equivalent at the full-scale reference geometry, and flags the `r = 0`
//! endpoint where decomposition degenerates to a single undifferentiated
//! prompt. Wall-clock numbers go to a separate timing file: median
//! ms/step per length, plus the isolated forward cost of the fusion and
//! projection modules (exactly 0 where a module is inactive).

use ept_core::PromptBudget;
use serde::Serialize;

use crate::commands::write_config_echo;
use crate::error::CliResult;
use crate::output::{mean_std, median, write_csv, write_json};
use crate::runner::{
    base_cell, fusion_forward_ms, pretrained_encoder, projection_forward_ms, run_cells, CellSpec,
    ExperimentSpec, SweepAxis,
};

/// Reference geometry at deployment scale; used only to annotate sweep
/// rows with comparable numbers.
pub const FULL_SCALE: (usize, usize, usize) = (100, 256, 768);

/// Map a desk-scale retained length to the reference geometry: same
/// retained fraction `s/l`, rank from the same budget equation.
pub fn full_scale_equivalent(s: usize, l: usize) -> (f64, f64) {
    let (fl, fm, fd) = FULL_SCALE;
    let s_eq = s as f64 / l as f64 * fl as f64;
    let r_eq = (fl as f64 - s_eq) * fd as f64 / (fm + fd) as f64;
    (s_eq, r_eq)
}

#[derive(Serialize)]
struct Row {
    s: usize,
    r: usize,
    full_scale_s: f64,
    full_scale_r: f64,
    vanilla_prompt_tuning: bool,
    n_seeds: usize,
    mean_eval_accuracy: f64,
    stddev_eval_accuracy: f64,
    config_hash: String,
}

#[derive(Serialize)]
struct TimingRow {
    s: usize,
    r: usize,
    median_ms_per_step: f64,
    fusion_forward_ms: f64,
    projection_forward_ms: f64,
}

pub fn run(spec: &mut ExperimentSpec) -> CliResult<()> {
    let cfg = &spec.config;
    let (enc, _) = pretrained_encoder(cfg)?;
    let lengths = cfg.usize_list("sweep.lengths", &[0, 3, 6, 9, 12, 15])?;
    spec.axis = Some(SweepAxis {
        name: "budget.s".to_string(),
        values: lengths.iter().map(|s| s.to_string()).collect(),
    });
    let l = cfg.usize("budget.l", 15)?;
    let mode = cfg.budget_mode()?;
    let hash = cfg.hash();

    // Solve every budget up front so an invalid (s, r) pair fails the
    // whole sweep before any training starts.
    let budgets: Vec<PromptBudget> = lengths
        .iter()
        .map(|&s| PromptBudget::solve(l, s, enc.cfg.max_seq, enc.cfg.d_model, mode))
        .collect::<ept_core::Result<_>>()?;

    let mut cells: Vec<CellSpec> = Vec::new();
    for budget in &budgets {
        for &seed in &spec.seeds {
            let mut cell = base_cell(cfg, &enc, seed)?;
            cell.budget = *budget;
            cell.label = format!("s{}-seed{}", budget.s, seed);
            cells.push(cell);
        }
    }
    let outcomes = run_cells(&enc, &cells, spec.jobs)?;

    let runs_dir = spec.out_dir.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(ept_core::EptError::from)?;
    for o in &outcomes {
        std::fs::write(
            runs_dir.join(format!("{}.jsonl", o.label)),
            o.record.to_jsonl(),
        )
        .map_err(ept_core::EptError::from)?;
    }

    let per_seed = spec.seeds.len();
    let mut rows = Vec::new();
    let mut timing_rows = Vec::new();
    for (i, budget) in budgets.iter().enumerate() {
        let slice = &outcomes[i * per_seed..(i + 1) * per_seed];
        let accs: Vec<f64> = slice.iter().map(|o| o.record.final_eval).collect();
        let (mean, std) = mean_std(&accs);
        let (fs, fr) = full_scale_equivalent(budget.s, l);
        rows.push(Row {
            s: budget.s,
            r: budget.r,
            full_scale_s: fs,
            full_scale_r: fr,
            vanilla_prompt_tuning: budget.r == 0,
            n_seeds: per_seed,
            mean_eval_accuracy: mean,
            stddev_eval_accuracy: std,
            config_hash: hash.clone(),
        });

        let step_medians: Vec<f64> = slice.iter().map(|o| o.record.median_step_ms()).collect();
        timing_rows.push(TimingRow {
            s: budget.s,
            r: budget.r,
            median_ms_per_step: median(&step_medians),
            fusion_forward_ms: fusion_forward_ms(&slice[0].params, 50),
            projection_forward_ms: projection_forward_ms(&slice[0].params, 50),
        });
    }
    write_csv(&spec.out_dir.join("sweep_length.csv"), &rows)?;
    write_csv(&spec.out_dir.join("timings.csv"), &timing_rows)?;

    let monotone = timing_rows
        .windows(2)
        .all(|w| w[1].median_ms_per_step >= w[0].median_ms_per_step);
    write_json(
        &spec.out_dir.join("summary.json"),
        &serde_json::json!({
            "budget_l": l,
            "lengths": lengths,
            "ms_per_step_nondecreasing_in_s": monotone,
            "config_hash": hash,
        }),
    )?;
    write_config_echo(&spec.out_dir, cfg)?;

    for (row, t) in rows.iter().zip(&timing_rows) {
        println!(
            "s={:<3} r={:<3} acc {:.4} ± {:.4}  {:.3} ms/step{}",
            row.s,
            row.r,
            row.mean_eval_accuracy,
            row.stddev_eval_accuracy,
            t.median_ms_per_step,
            if row.vanilla_prompt_tuning {
                "  [vanilla prompt tuning]"
            } else {
                ""
            }
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_mapping_reproduces_the_reference_pairs() {
        // Desk l=15 fractions map onto the reference geometry's budget
        // table: (20,60), (40,45), (60,30), (80,15), (100,0), (0,75).
        for (s, want_s, want_r) in [
            (0, 0.0, 75.0),
            (3, 20.0, 60.0),
            (6, 40.0, 45.0),
            (9, 60.0, 30.0),
            (12, 80.0, 15.0),
            (15, 100.0, 0.0),
        ] {
            let (fs, fr) = full_scale_equivalent(s, 15);
            assert!((fs - want_s).abs() < 1e-12, "s={s}: {fs} vs {want_s}");
            assert!((fr - want_r).abs() < 1e-12, "s={s}: {fr} vs {want_r}");
        }
    }
}
