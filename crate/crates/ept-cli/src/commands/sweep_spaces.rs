//! `sweep-spaces` — vary the number of projection subspaces with fusion
//! disabled, isolating the projection module's contribution per task.

use ept_core::pipeline::DEFAULT_N_EXPERTS;
use serde::Serialize;

use crate::commands::write_config_echo;
use crate::error::CliResult;
use crate::output::{mean_std, write_csv, write_json};
use crate::runner::{
    base_cell, pretrained_encoder, run_cells, CellSpec, ExperimentSpec, SweepAxis,
};

#[derive(Serialize)]
struct Row {
    task: String,
    n_experts: usize,
    n_seeds: usize,
    mean_eval_accuracy: f64,
    stddev_eval_accuracy: f64,
    config_hash: String,
}

fn population_variance(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64
}

pub fn run(spec: &mut ExperimentSpec) -> CliResult<()> {
    let cfg = &spec.config;
    let (enc, _) = pretrained_encoder(cfg)?;
    let lo = cfg.usize("spaces.min", 2)?;
    let hi = cfg.usize("spaces.max", 8)?;
    if lo < 1 || hi < lo {
        return Err(crate::error::config_err(format!(
            "spaces.min..spaces.max = {lo}..{hi} is not a valid expert-count range"
        )));
    }
    let counts: Vec<usize> = (lo..=hi).collect();
    let tasks = cfg.task_kinds("spaces.tasks")?;
    spec.axis = Some(SweepAxis {
        name: "pipeline.n_experts".to_string(),
        values: counts.iter().map(|c| c.to_string()).collect(),
    });
    let hash = cfg.hash();

    let mut cells: Vec<CellSpec> = Vec::new();
    for &task in &tasks {
        for &n in &counts {
            for &seed in &spec.seeds {
                let mut cell = base_cell(cfg, &enc, seed)?;
                cell.task_kind = task;
                cell.n_experts = n;
                // Projection in isolation: fusion stays off for every cell.
                cell.use_fusion = false;
                cell.use_projection = true;
                cell.label = format!("{task}-experts{n}-seed{seed}");
                cells.push(cell);
            }
        }
    }
    let outcomes = run_cells(&enc, &cells, spec.jobs)?;

    let per_seed = spec.seeds.len();
    let mut rows = Vec::new();
    let mut task_mean_curves: Vec<Vec<f64>> = Vec::new();
    for (t, &task) in tasks.iter().enumerate() {
        let mut curve = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            let start = (t * counts.len() + c) * per_seed;
            let accs: Vec<f64> = outcomes[start..start + per_seed]
                .iter()
                .map(|o| o.record.final_eval)
                .collect();
            let (mean, std) = mean_std(&accs);
            curve.push(mean);
            rows.push(Row {
                task: task.to_string(),
                n_experts: n,
                n_seeds: per_seed,
                mean_eval_accuracy: mean,
                stddev_eval_accuracy: std,
                config_hash: hash.clone(),
            });
        }
        task_mean_curves.push(curve);
    }
    write_csv(&spec.out_dir.join("sweep_spaces.csv"), &rows)?;

    // How much the metric moves along the expert axis, versus how much it
    // moves across tasks: small fluctuation along the axis is the point.
    let within: Vec<f64> = task_mean_curves
        .iter()
        .map(|c| population_variance(c))
        .collect();
    let task_level_means: Vec<f64> = task_mean_curves
        .iter()
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let mean_within = within.iter().sum::<f64>() / within.len() as f64;
    let across = population_variance(&task_level_means);
    write_json(
        &spec.out_dir.join("summary.json"),
        &serde_json::json!({
            "expert_counts": counts,
            "tasks": tasks.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
            "shipped_default_n_experts": DEFAULT_N_EXPERTS,
            "mean_variance_across_expert_counts": mean_within,
            "variance_across_tasks": across,
            "config_hash": hash,
        }),
    )?;
    write_config_echo(&spec.out_dir, cfg)?;

    for row in &rows {
        println!(
            "{:<17} experts={} mean {:.4} ± {:.4}",
            row.task, row.n_experts, row.mean_eval_accuracy, row.stddev_eval_accuracy
        );
    }
    Ok(())
}
