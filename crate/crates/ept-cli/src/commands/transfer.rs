//! `transfer` — few-shot prompt transfer: train the pipeline on a
//! data-rich source task, checkpoint it, then compare that checkpoint
//! against a fresh initialization as the starting point for k-shot runs
//! on a target task.
//!
//! The source and target default to the same task family with disjoint
//! data seeds — the related-task setting where prompt transfer is known
//! to help. Transferring between unrelated rule families is supported
//! (set `transfer.source_task` and `transfer.target_task`) but tends to
//! start the target run from a worse point than a fresh init.

use ept_core::io::{ensure_compatible, read_ept_checkpoint, write_ept_checkpoint};
use ept_core::rng::derive_seed;
use ept_core::{EptParams, TaskKind};
use serde::Serialize;

use crate::commands::write_config_echo;
use crate::error::CliResult;
use crate::output::{mean_std, write_csv, write_json};
use crate::runner::{base_cell, pretrained_encoder, run_cell, run_cells, CellSpec, ExperimentSpec};

#[derive(Serialize)]
struct Row {
    seed: u64,
    fresh_eval_accuracy: f64,
    transferred_eval_accuracy: f64,
    config_hash: String,
}

pub fn run(spec: &ExperimentSpec) -> CliResult<()> {
    let cfg = &spec.config;
    let (enc, _) = pretrained_encoder(cfg)?;
    let default_kind = cfg.task_kind("task.kind", TaskKind::ContainsPattern)?;
    let source_kind = cfg.task_kind("transfer.source_task", default_kind)?;
    let target_kind = cfg.task_kind("transfer.target_task", default_kind)?;
    let k = cfg.usize("transfer.k", 16)?;
    let hash = cfg.hash();

    // Phase 1: full-data source run, checkpointed to disk. The source
    // dataset seed is derived off the task seed stream so it can never
    // collide with a target seed.
    let mut source = base_cell(cfg, &enc, 0)?;
    source.task_kind = source_kind;
    source.task_cfg.seed = derive_seed(source.task_cfg.seed, "transfer-source");
    source.train.steps = cfg.usize("transfer.source_steps", source.train.steps)?;
    source.label = format!("source-{source_kind}");
    let source_outcome = run_cell(&enc, &source)?;
    let ckpt = spec.out_dir.join("source_params.ckpt");
    write_ept_checkpoint(&ckpt, &source_outcome.params)?;

    // Reload through the file to exercise the actual transfer artifact,
    // and check it against the target geometry before training on it.
    let loaded = read_ept_checkpoint(&ckpt)?;
    let template = EptParams::init(
        &source.budget,
        &enc.embedding,
        source.n_experts,
        source.variant,
        source.use_fusion,
        source.use_projection,
        source.init_seed,
    )?;
    ensure_compatible(&template, &loaded)?;

    // Phase 2: per seed, the same k-shot target run from both starting
    // points.
    let mut cells: Vec<CellSpec> = Vec::new();
    for &seed in &spec.seeds {
        let mut fresh = base_cell(cfg, &enc, seed)?;
        fresh.task_kind = target_kind;
        fresh.kshot = Some((k, cfg.u64("kshot.seed", 0)? + seed));
        fresh.label = format!("target-fresh-seed{seed}");
        let mut transferred = fresh.clone();
        transferred.init_from = Some(loaded.clone());
        transferred.label = format!("target-transferred-seed{seed}");
        cells.push(fresh);
        cells.push(transferred);
    }
    let outcomes = run_cells(&enc, &cells, spec.jobs)?;

    let runs_dir = spec.out_dir.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(ept_core::EptError::from)?;
    std::fs::write(
        runs_dir.join("source.jsonl"),
        source_outcome.record.to_jsonl(),
    )
    .map_err(ept_core::EptError::from)?;
    for o in &outcomes {
        std::fs::write(
            runs_dir.join(format!("{}.jsonl", o.label)),
            o.record.to_jsonl(),
        )
        .map_err(ept_core::EptError::from)?;
    }

    let mut rows = Vec::new();
    for (i, &seed) in spec.seeds.iter().enumerate() {
        rows.push(Row {
            seed,
            fresh_eval_accuracy: outcomes[2 * i].record.final_eval,
            transferred_eval_accuracy: outcomes[2 * i + 1].record.final_eval,
            config_hash: hash.clone(),
        });
    }
    write_csv(&spec.out_dir.join("transfer.csv"), &rows)?;

    let (fresh_mean, _) = mean_std(
        &rows
            .iter()
            .map(|r| r.fresh_eval_accuracy)
            .collect::<Vec<_>>(),
    );
    let (xfer_mean, _) = mean_std(
        &rows
            .iter()
            .map(|r| r.transferred_eval_accuracy)
            .collect::<Vec<_>>(),
    );
    write_json(
        &spec.out_dir.join("summary.json"),
        &serde_json::json!({
            "source_task": source_kind.to_string(),
            "target_task": target_kind.to_string(),
            "k": k,
            "source_final_eval_accuracy": source_outcome.record.final_eval,
            "mean_fresh_eval_accuracy": fresh_mean,
            "mean_transferred_eval_accuracy": xfer_mean,
            "transfer_helps_or_ties": xfer_mean >= fresh_mean,
            "config_hash": hash,
        }),
    )?;
    write_config_echo(&spec.out_dir, cfg)?;

    println!(
        "source {source_kind} reached {:.4}; target {target_kind} k={k}: transferred {:.4} vs fresh {:.4}",
        source_outcome.record.final_eval, xfer_mean, fresh_mean
    );
    Ok(())
}
