//! `bake` — collapse a trained pipeline checkpoint into the deployment
//! artifact: the reconstructed prompt plus the low-rank factors, with the
//! fusion and projection networks discarded.

use ept_core::bake;
use ept_core::io::{read_ept_checkpoint, write_baked_prompt};

use crate::commands::write_config_echo;
use crate::error::{config_err, CliResult};
use crate::output::write_json;
use crate::runner::ExperimentSpec;

pub fn run(spec: &ExperimentSpec) -> CliResult<()> {
    let cfg = &spec.config;
    let Some(ckpt) = cfg.get("pipeline.checkpoint") else {
        return Err(config_err(
            "bake needs pipeline.checkpoint pointing at a file written by the train subcommand",
        ));
    };
    let params = read_ept_checkpoint(ckpt.as_ref())?;
    let baked = bake(&params)?;
    let out = spec.out_dir.join("baked.bin");
    write_baked_prompt(&out, &baked, &params.budget, params.variant)?;

    let live = params.param_count();
    write_json(
        &spec.out_dir.join("summary.json"),
        &serde_json::json!({
            "source_checkpoint": ckpt,
            "budget": { "l": params.budget.l, "s": params.budget.s, "m": params.budget.m,
                         "d": params.budget.d, "r": params.budget.r },
            "variant": params.variant.to_string(),
            "live_params": live,
            "baked_params": baked.param_count(),
            "config_hash": cfg.hash(),
        }),
    )?;
    write_config_echo(&spec.out_dir, cfg)?;
    println!(
        "baked {} live parameters down to {} ({})",
        live,
        baked.param_count(),
        out.display()
    );
    Ok(())
}
