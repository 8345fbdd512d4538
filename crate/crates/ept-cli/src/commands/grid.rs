//! `grid` — Cartesian learning-rate search over the prompt-group and
//! factor-group step sizes, with a deterministic tie-break.

use serde::Serialize;

use crate::commands::write_config_echo;
use crate::error::CliResult;
use crate::output::{mean_std, write_csv, write_json};
use crate::runner::{base_cell, pretrained_encoder, run_cells, CellSpec, ExperimentSpec};

pub const DEFAULT_LR_PROMPT: [f64; 3] = [0.3, 0.4, 0.5];
pub const DEFAULT_LR_LOWRANK: [f64; 3] = [1e-4, 5e-4, 5e-3];

#[derive(Serialize, Clone)]
pub struct GridRow {
    pub lr_prompt: f64,
    pub lr_lowrank: f64,
    pub n_seeds: usize,
    pub mean_eval_accuracy: f64,
    pub stddev_eval_accuracy: f64,
    pub config_hash: String,
}

/// Best row by mean metric; ties go to the lower prompt learning rate,
/// then the lower factor learning rate.
pub fn select_best(rows: &[GridRow]) -> Option<usize> {
    let better = |a: &GridRow, b: &GridRow| {
        (a.mean_eval_accuracy, -a.lr_prompt, -a.lr_lowrank)
            .partial_cmp(&(b.mean_eval_accuracy, -b.lr_prompt, -b.lr_lowrank))
            .expect("metrics are finite")
            .is_gt()
    };
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if better(row, &rows[b]) => best = Some(i),
            _ => {}
        }
    }
    best
}

pub fn run(spec: &ExperimentSpec) -> CliResult<()> {
    let cfg = &spec.config;
    let (enc, _) = pretrained_encoder(cfg)?;
    let prompts = cfg.f64_list("grid.lr_prompt", &DEFAULT_LR_PROMPT)?;
    let lowranks = cfg.f64_list("grid.lr_lowrank", &DEFAULT_LR_LOWRANK)?;
    let hash = cfg.hash();

    let mut cells: Vec<CellSpec> = Vec::new();
    for &lp in &prompts {
        for &ll in &lowranks {
            for &seed in &spec.seeds {
                let mut cell = base_cell(cfg, &enc, seed)?;
                cell.train.lr_prompt = lp;
                cell.train.lr_lowrank = ll;
                cell.label = format!("lp{lp}-ll{ll}-seed{seed}");
                cells.push(cell);
            }
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
    for (p, &lp) in prompts.iter().enumerate() {
        for (q, &ll) in lowranks.iter().enumerate() {
            let start = (p * lowranks.len() + q) * per_seed;
            let accs: Vec<f64> = outcomes[start..start + per_seed]
                .iter()
                .map(|o| o.record.final_eval)
                .collect();
            let (mean, std) = mean_std(&accs);
            rows.push(GridRow {
                lr_prompt: lp,
                lr_lowrank: ll,
                n_seeds: per_seed,
                mean_eval_accuracy: mean,
                stddev_eval_accuracy: std,
                config_hash: hash.clone(),
            });
        }
    }
    write_csv(&spec.out_dir.join("grid.csv"), &rows)?;

    let best = select_best(&rows).expect("grid is nonempty");
    let best_row = &rows[best];
    write_json(
        &spec.out_dir.join("best.json"),
        &serde_json::json!({
            "lr_prompt": best_row.lr_prompt,
            "lr_lowrank": best_row.lr_lowrank,
            "mean_eval_accuracy": best_row.mean_eval_accuracy,
            "config_hash": hash,
        }),
    )?;
    write_config_echo(&spec.out_dir, cfg)?;

    for row in &rows {
        println!(
            "lr_prompt={:<6} lr_lowrank={:<8} mean {:.4} ± {:.4}",
            row.lr_prompt, row.lr_lowrank, row.mean_eval_accuracy, row.stddev_eval_accuracy
        );
    }
    println!(
        "best: lr_prompt={} lr_lowrank={} at {:.4}",
        best_row.lr_prompt, best_row.lr_lowrank, best_row.mean_eval_accuracy
    );
    Ok(())
}
