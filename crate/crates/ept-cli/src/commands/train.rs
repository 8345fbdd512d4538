//! `train` — one training run: build or load the backbone, train the
//! prompt pipeline on the configured task, and write the run log, final
//! checkpoint, baked prompt, and timing file.

use ept_core::io::{
    ensure_compatible, read_ept_checkpoint, write_baked_prompt, write_ept_checkpoint,
};

use crate::commands::write_config_echo;
use crate::error::CliResult;
use crate::output::{write_csv, write_json};
use crate::runner::{base_cell, encoder_from_config, run_cell, ExperimentSpec};

#[derive(serde::Serialize)]
struct StepTiming {
    step: usize,
    ms: f64,
}

pub fn run(spec: &ExperimentSpec) -> CliResult<()> {
    let cfg = &spec.config;
    let (enc, enc_src) = encoder_from_config(cfg)?;
    let mut cell = base_cell(cfg, &enc, 0)?;

    // An explicit pipeline checkpoint replaces the fresh init — the
    // resume / transfer path. It must match the configured geometry.
    if let Some(path) = cfg.get("pipeline.checkpoint") {
        let loaded = read_ept_checkpoint(path.as_ref())?;
        let template = ept_core::EptParams::init(
            &cell.budget,
            &enc.embedding,
            cell.n_experts,
            cell.variant,
            cell.use_fusion,
            cell.use_projection,
            cell.init_seed,
        )?;
        ensure_compatible(&template, &loaded)?;
        cell.init_from = Some(loaded);
    }

    let outcome = run_cell(&enc, &cell)?;
    let record = &outcome.record;

    std::fs::write(spec.out_dir.join("run.jsonl"), record.to_jsonl())
        .map_err(ept_core::EptError::from)?;
    write_ept_checkpoint(&spec.out_dir.join("params.ckpt"), &outcome.params)?;
    write_baked_prompt(
        &spec.out_dir.join("baked.bin"),
        &outcome.baked,
        &outcome.params.budget,
        outcome.params.variant,
    )?;

    let timings: Vec<StepTiming> = record
        .step_ms
        .iter()
        .enumerate()
        .map(|(step, &ms)| StepTiming { step, ms })
        .collect();
    write_csv(&spec.out_dir.join("timings.csv"), &timings)?;
    write_json(
        &spec.out_dir.join("timing_summary.json"),
        &serde_json::json!({
            "median_ms_per_step": record.median_step_ms(),
            "total_ms": record.total_ms,
        }),
    )?;

    write_json(
        &spec.out_dir.join("summary.json"),
        &serde_json::json!({
            "task": cell.task_kind.to_string(),
            "budget": { "l": cell.budget.l, "s": cell.budget.s, "m": cell.budget.m,
                         "d": cell.budget.d, "r": cell.budget.r },
            "use_fusion": cell.use_fusion,
            "use_projection": cell.use_projection,
            "variant": cell.variant.to_string(),
            "final_eval_accuracy": record.final_eval,
            "best_eval_accuracy": record.best_eval,
            "prompt_group_params": record.prompt_group_params,
            "lowrank_group_params": record.lowrank_group_params,
            "baked_params": outcome.baked.param_count(),
            "encoder_checkpoint": enc_src.map(|p| p.display().to_string()),
            "config_hash": cfg.hash(),
        }),
    )?;
    write_config_echo(&spec.out_dir, cfg)?;

    println!(
        "{}: final eval accuracy {:.4} (best {:.4}) in {} steps",
        cell.task_kind, record.final_eval, record.best_eval, cell.train.steps
    );
    println!("results: {}", spec.out_dir.display());
    Ok(())
}
