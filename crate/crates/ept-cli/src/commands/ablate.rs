//! `ablate` — the component matrix: decomposition alone, each enrichment
//! module alone, and the full pipeline, across tasks and seeds, with
//! mean ± stddev per cell.

use ept_core::TaskKind;
use serde::Serialize;

use crate::commands::write_config_echo;
use crate::error::CliResult;
use crate::output::{mean_std, write_csv, write_json};
use crate::runner::{base_cell, pretrained_encoder, run_cells, CellSpec, ExperimentSpec};

/// The four mode combinations, in presentation order.
pub const MODES: [(&str, bool, bool); 4] = [
    ("decomposition-only", false, false),
    ("+fusion", true, false),
    ("+projection", false, true),
    ("full", true, true),
];

fn mode_slug(name: &str) -> String {
    name.trim_start_matches('+').replace('-', "_").to_string()
}

#[derive(Serialize)]
struct Row {
    task: String,
    mode: String,
    use_fusion: bool,
    use_projection: bool,
    n_seeds: usize,
    mean_eval_accuracy: f64,
    stddev_eval_accuracy: f64,
    config_hash: String,
}

pub fn run(spec: &ExperimentSpec) -> CliResult<()> {
    let cfg = &spec.config;
    let (enc, _) = pretrained_encoder(cfg)?;
    let tasks = cfg.task_kinds("ablate.tasks")?;
    let hash = cfg.hash();

    // Build the full cell list first so independent cells can fan out
    // across the pool; rows are assembled single-threaded afterwards.
    let mut cells: Vec<CellSpec> = Vec::new();
    for &task in &tasks {
        for &(mode, fusion, projection) in &MODES {
            for &seed in &spec.seeds {
                let mut cell = base_cell(cfg, &enc, seed)?;
                cell.task_kind = task;
                cell.use_fusion = fusion;
                cell.use_projection = projection;
                cell.label = format!("{task}-{}-seed{seed}", mode_slug(mode));
                cells.push(cell);
            }
        }
    }
    let outcomes = run_cells(&enc, &cells, spec.jobs)?;

    let runs_dir = spec.out_dir.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(ept_core::EptError::from)?;
    for outcome in &outcomes {
        std::fs::write(
            runs_dir.join(format!("{}.jsonl", outcome.label)),
            outcome.record.to_jsonl(),
        )
        .map_err(ept_core::EptError::from)?;
    }

    let per_seed = spec.seeds.len();
    let mut rows = Vec::new();
    let mut task_means: Vec<(TaskKind, f64, f64)> = Vec::new();
    for (t, &task) in tasks.iter().enumerate() {
        let mut decomp_mean = f64::NAN;
        let mut full_mean = f64::NAN;
        for (m, &(mode, fusion, projection)) in MODES.iter().enumerate() {
            let start = (t * MODES.len() + m) * per_seed;
            let accs: Vec<f64> = outcomes[start..start + per_seed]
                .iter()
                .map(|o| o.record.final_eval)
                .collect();
            let (mean, std) = mean_std(&accs);
            if mode == "decomposition-only" {
                decomp_mean = mean;
            }
            if mode == "full" {
                full_mean = mean;
            }
            rows.push(Row {
                task: task.to_string(),
                mode: mode.to_string(),
                use_fusion: fusion,
                use_projection: projection,
                n_seeds: per_seed,
                mean_eval_accuracy: mean,
                stddev_eval_accuracy: std,
                config_hash: hash.clone(),
            });
        }
        task_means.push((task, decomp_mean, full_mean));
    }
    write_csv(&spec.out_dir.join("ablation.csv"), &rows)?;

    let agg_decomp = task_means.iter().map(|(_, d, _)| d).sum::<f64>() / task_means.len() as f64;
    let agg_full = task_means.iter().map(|(_, _, f)| f).sum::<f64>() / task_means.len() as f64;
    write_json(
        &spec.out_dir.join("summary.json"),
        &serde_json::json!({
            "tasks": tasks.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
            "modes": MODES.iter().map(|(m, _, _)| m.to_string()).collect::<Vec<_>>(),
            "n_seeds": per_seed,
            "aggregate_mean_decomposition_only": agg_decomp,
            "aggregate_mean_full": agg_full,
            "full_beats_or_ties_decomposition": agg_full >= agg_decomp,
            "config_hash": hash,
        }),
    )?;
    write_config_echo(&spec.out_dir, cfg)?;

    for row in &rows {
        println!(
            "{:<17} {:<19} mean {:.4} ± {:.4}",
            row.task, row.mode, row.mean_eval_accuracy, row.stddev_eval_accuracy
        );
    }
    println!(
        "aggregate: full {:.4} vs decomposition-only {:.4}",
        agg_full, agg_decomp
    );
    Ok(())
}
