//! `pretrain` — masked-token pretraining of the frozen backbone on a
//! seeded Markov corpus, producing the encoder checkpoint every training
//! subcommand builds on.

use ept_core::corpus::markov_corpus;
use ept_core::encoder::masked_accuracy;
use ept_core::io::{content_hash_hex, encoder_manifest, write_encoder_checkpoint};
use ept_core::pretrain_encoder;

use crate::commands::write_config_echo;
use crate::error::CliResult;
use crate::output::write_json;
use crate::runner::ExperimentSpec;

pub fn run(spec: &ExperimentSpec) -> CliResult<()> {
    let cfg = &spec.config;
    let enc_cfg = cfg.encoder_config()?;
    let steps = cfg.usize("pretrain.steps", 10_000)?;
    let corpus_size = cfg.usize("pretrain.corpus_size", 512)?;
    let min_len = cfg.usize("pretrain.min_len", 8)?;
    let max_len = cfg.usize("pretrain.max_len", enc_cfg.max_seq)?;
    let chain_seed = cfg.u64("pretrain.chain_seed", 100)?;
    let sample_seed = cfg.u64("pretrain.sample_seed", 1)?;
    let heldout_size = cfg.usize("pretrain.heldout_size", 128)?;
    let heldout_sample_seed = cfg.u64("pretrain.heldout_sample_seed", 2)?;

    let corpus = markov_corpus(
        enc_cfg.vocab_size,
        corpus_size,
        min_len,
        max_len,
        chain_seed,
        sample_seed,
    )?;
    // Held-out text from the same chain: different draws of the same
    // language, so masked accuracy measures generalization.
    let heldout = markov_corpus(
        enc_cfg.vocab_size,
        heldout_size,
        min_len,
        max_len,
        chain_seed,
        heldout_sample_seed,
    )?;

    let encoder = pretrain_encoder(&enc_cfg, &corpus, steps)?;
    let train_acc = masked_accuracy(&encoder, &corpus, 0)?;
    let heldout_acc = masked_accuracy(&encoder, &heldout, 0)?;

    let ckpt = spec.out_dir.join("encoder.ckpt");
    write_encoder_checkpoint(&ckpt, &encoder)?;
    write_json(
        &spec.out_dir.join("manifest.json"),
        &encoder_manifest(&ckpt, &encoder)?,
    )?;
    write_json(
        &spec.out_dir.join("summary.json"),
        &serde_json::json!({
            "steps": steps,
            "corpus_size": corpus_size,
            "heldout_size": heldout_size,
            "masked_accuracy_train": train_acc,
            "masked_accuracy_heldout": heldout_acc,
            "checkpoint": ckpt.display().to_string(),
            "checkpoint_hash": content_hash_hex(&std::fs::read(&ckpt).map_err(ept_core::EptError::from)?),
            "config_hash": cfg.hash(),
        }),
    )?;
    write_config_echo(&spec.out_dir, cfg)?;
    println!(
        "pretrained {steps} steps: masked accuracy train {train_acc:.4}, heldout {heldout_acc:.4}"
    );
    println!("encoder checkpoint: {}", ckpt.display());
    Ok(())
}
