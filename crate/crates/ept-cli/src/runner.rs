//! Shared experiment machinery.
//!
//! Every training subcommand — single runs, the ablation matrix, both
//! sweeps, the learning-rate grid, and transfer — describes each unit of
//! work as a [`CellSpec`] and executes it through [`run_cell`]. One code
//! path means an orchestrated cell and a standalone `train` invocation
//! with the same settings produce identical records.

use std::path::PathBuf;
use std::time::Instant;

use ept_core::io::read_encoder_checkpoint;
use ept_core::pipeline::DEFAULT_N_EXPERTS;
use ept_core::{
    bake, kshot_subsample, make_task, train, BakedPrompt, EptParams, FrozenEncoder, FusionVariant,
    PromptBudget, RunRecord, TaskConfig, TaskKind, TrainConfig,
};

use crate::config::Config;
use crate::error::{config_err, CliResult};

/// One invocation of the harness, resolved from the command line: which
/// subcommand runs, where its configuration came from, where results go,
/// which seeds it covers, and (for sweeps) the axis being varied.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub subcommand: String,
    pub config: Config,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub axis: Option<SweepAxis>,
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<String>,
}

/// Everything needed to run one training cell.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub label: String,
    pub task_kind: TaskKind,
    pub task_cfg: TaskConfig,
    /// `Some((k, seed))` trains on a k-per-class subsample.
    pub kshot: Option<(usize, u64)>,
    pub budget: PromptBudget,
    pub n_experts: usize,
    pub variant: FusionVariant,
    pub use_fusion: bool,
    pub use_projection: bool,
    pub init_seed: u64,
    /// Start from these parameters instead of a fresh init (transfer).
    pub init_from: Option<EptParams<f64>>,
    pub train: TrainConfig,
}

pub struct CellOutcome {
    pub label: String,
    pub record: RunRecord,
    pub params: EptParams<f64>,
    pub baked: BakedPrompt<f64>,
}

/// Load the frozen backbone from `encoder.checkpoint`, or initialize an
/// untrained one from the `encoder.*` keys when no checkpoint is named.
pub fn encoder_from_config(cfg: &Config) -> CliResult<(FrozenEncoder, Option<PathBuf>)> {
    match cfg.get("encoder.checkpoint") {
        Some(path) => {
            let path = PathBuf::from(path);
            let enc = read_encoder_checkpoint(&path)?;
            Ok((enc, Some(path)))
        }
        None => {
            let enc = FrozenEncoder::init(&cfg.encoder_config()?)?;
            Ok((enc, None))
        }
    }
}

/// Like [`encoder_from_config`] but refuses to fall back to an untrained
/// backbone — for subcommands whose results are meaningless without
/// pretraining.
pub fn pretrained_encoder(cfg: &Config) -> CliResult<(FrozenEncoder, PathBuf)> {
    match encoder_from_config(cfg)? {
        (enc, Some(path)) => Ok((enc, path)),
        (_, None) => Err(config_err(
            "this subcommand needs a pretrained backbone: set encoder.checkpoint \
             to a file produced by the pretrain subcommand",
        )),
    }
}

/// Solve the prompt budget with `m` and `d` pinned to the backbone
/// geometry; only `budget.l`, `budget.s`, and `budget.mode` are free.
pub fn budget_from_config(cfg: &Config, enc: &FrozenEncoder) -> CliResult<PromptBudget> {
    let l = cfg.usize("budget.l", 15)?;
    let s = cfg.usize("budget.s", 9)?;
    let budget = PromptBudget::solve(l, s, enc.cfg.max_seq, enc.cfg.d_model, cfg.budget_mode()?)?;
    Ok(budget)
}

/// Assemble the cell a plain `train` invocation would run for seed offset
/// `offset`; orchestrators start from this and vary one field at a time.
pub fn base_cell(cfg: &Config, enc: &FrozenEncoder, offset: u64) -> CliResult<CellSpec> {
    let task_kind = cfg.task_kind("task.kind", TaskKind::ContainsPattern)?;
    let k = cfg.usize("kshot.k", 0)?;
    let kshot = if k > 0 {
        Some((k, cfg.u64("kshot.seed", 0)? + offset))
    } else {
        None
    };
    Ok(CellSpec {
        label: format!("{task_kind}-seed{offset}"),
        task_kind,
        task_cfg: cfg.task_config(&enc.cfg, offset)?,
        kshot,
        budget: budget_from_config(cfg, enc)?,
        n_experts: cfg.usize("pipeline.n_experts", DEFAULT_N_EXPERTS)?,
        variant: cfg.variant()?,
        use_fusion: cfg.bool("pipeline.use_fusion", true)?,
        use_projection: cfg.bool("pipeline.use_projection", true)?,
        init_seed: cfg.u64("pipeline.seed", 0)? + offset,
        init_from: None,
        train: cfg.train_config(offset)?,
    })
}

/// Run one cell: build the task, initialize or adopt parameters, train,
/// and bake the deployment prompt from the final state.
pub fn run_cell(enc: &FrozenEncoder, spec: &CellSpec) -> CliResult<CellOutcome> {
    let full_task = make_task(spec.task_kind, &spec.task_cfg)?;
    let task = match spec.kshot {
        Some((k, seed)) => kshot_subsample(&full_task, k, seed)?,
        None => full_task,
    };
    let mut params = match &spec.init_from {
        Some(p) => p.clone(),
        None => EptParams::init(
            &spec.budget,
            &enc.embedding,
            spec.n_experts,
            spec.variant,
            spec.use_fusion,
            spec.use_projection,
            spec.init_seed,
        )?,
    };
    let record = train(&mut params, enc, &task, &spec.train)?;
    let baked = bake(&params)?;
    Ok(CellOutcome {
        label: spec.label.clone(),
        record,
        params,
        baked,
    })
}

/// Run cells in spec order, fanning out over a thread pool when
/// `jobs > 1`. Results come back in input order either way.
pub fn run_cells(
    enc: &FrozenEncoder,
    specs: &[CellSpec],
    jobs: usize,
) -> CliResult<Vec<CellOutcome>> {
    if jobs <= 1 || specs.len() <= 1 {
        return specs.iter().map(|s| run_cell(enc, s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| config_err(format!("cannot build a {jobs}-thread pool: {e}")))?;
    pool.install(|| {
        use rayon::prelude::*;
        specs.par_iter().map(|s| run_cell(enc, s)).collect()
    })
}

/// Wall-clock cost of the fusion module's forward pass on these
/// parameters, in milliseconds (median of `reps`); exactly 0 when the
/// module is inactive.
pub fn fusion_forward_ms(params: &EptParams<f64>, reps: usize) -> f64 {
    if !params.fusion_active() {
        return 0.0;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        let w = ept_core::attention_weights(
            &params.decomposed.p_short,
            &params.decomposed.a,
            &params.decomposed.b,
            params.variant,
        )
        .expect("active fusion has valid shapes");
        std::hint::black_box(
            ept_core::fuse(
                &params.decomposed.p_short,
                &w,
                &params.decomposed.a,
                &params.decomposed.b,
                params.variant,
            )
            .expect("active fusion has valid shapes"),
        );
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    crate::output::median(&times)
}

/// Wall-clock cost of the projection module's forward pass, in
/// milliseconds; exactly 0 when the module is inactive.
pub fn projection_forward_ms(params: &EptParams<f64>, reps: usize) -> f64 {
    if !params.projection_active() {
        return 0.0;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        std::hint::black_box(
            ept_core::amend(&params.decomposed.p_short, &params.experts, &params.gate)
                .expect("active projection has valid shapes"),
        );
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    crate::output::median(&times)
}
