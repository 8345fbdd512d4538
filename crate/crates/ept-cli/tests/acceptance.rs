//! The acceptance gate: ten checks covering the whole pipeline, run in a
//! fixed order by one orchestrating test. Each check prints a single
//! pass/fail line (visible with `--nocapture`, or in the failure message);
//! the test fails at the end if any check failed or overran its limit.
//!
//! The learning-level checks train against a backbone pretrained for
//! 10,000 masked-token steps. The pretrained weights are cached under the
//! target directory, keyed by their configuration, so repeated invocations
//! skip the pretraining cost; pretraining is deterministic, so the cache
//! is pure memoization.

use std::path::PathBuf;
use std::time::Instant;

use once_cell::sync::{Lazy, OnceCell};
use rand::Rng;

use ept_cli::commands::gradcheck::check_random_shapes;
use ept_cli::output::median;
use ept_core::corpus::markov_corpus;
use ept_core::encoder::{build_logits, masked_accuracy};
use ept_core::pipeline::{build_prompt, build_training_input, DEFAULT_N_EXPERTS};
use ept_core::rng::rng_from_seed;
use ept_core::{
    attention_weights, bake, decompose, forward, gate_weights, make_task, pretrain_encoder,
    prompt_matrix, read_encoder_checkpoint, train, write_baked_prompt, write_encoder_checkpoint,
    write_ept_checkpoint, BudgetMode, EncoderConfig, EptParams, FrozenEncoder, FusionVariant,
    GateNet, LabeledDataset, Mat, PromptBudget, Tape, TaskConfig, TaskKind, TrainConfig,
};

// ---------------------------------------------------------------------------
// Shared fixtures.

/// Seeds for every multi-seed check.
const SEEDS: std::ops::Range<u64> = 0..5;
/// Task data seeds live in their own range so they never collide with
/// parameter or batch seeds.
const TASK_SEED_BASE: u64 = 1000;
/// Evaluation-split size for the learning-level checks.
const EVAL_SIZE: usize = 256;
/// A trained run must beat the best constant classifier by this margin
/// (before the 0.9 tolerance factor) to count as having learned.
const BASELINE_MARGIN: f64 = 0.1;
/// Masked-token pretraining steps for the shared backbone.
const PRETRAIN_STEPS: usize = 10_000;

fn backbone_config() -> EncoderConfig {
    EncoderConfig {
        seed: 7,
        ..EncoderConfig::default()
    }
}

/// The pretrained frozen backbone, built once per process and cached on
/// disk across processes. The checkpoint format verifies a content hash
/// and the stored configuration, so a stale or corrupt cache falls back
/// to pretraining from scratch.
static BACKBONE: Lazy<FrozenEncoder> = Lazy::new(|| {
    let cache = PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .join(format!("acceptance-backbone-seed7-{PRETRAIN_STEPS}.ckpt"));
    if let Ok(enc) = read_encoder_checkpoint(&cache) {
        if enc.cfg == backbone_config() {
            return enc;
        }
    }
    let cfg = backbone_config();
    let corpus = markov_corpus(cfg.vocab_size, 512, 8, cfg.max_seq, 100, 1)
        .expect("pretraining corpus generates");
    let enc = pretrain_encoder(&cfg, &corpus, PRETRAIN_STEPS).expect("backbone pretrains");
    let _ = write_encoder_checkpoint(&cache, &enc);
    enc
});

/// Default desk geometry: a 15-row source prompt keeping 9 rows, the rest
/// of the budget in a rank-4 factor pair over a 16x32 embedding block.
fn desk_budget() -> PromptBudget {
    PromptBudget::solve(15, 9, 16, 32, BudgetMode::Exact).expect("default geometry is exact")
}

struct TaskRun {
    kind: TaskKind,
    step0_accuracy: f64,
    final_accuracy: f64,
    /// Brute-force best-constant-classifier accuracy on this run's eval
    /// split (max class frequency).
    constant_accuracy: f64,
}

fn best_constant_accuracy(task: &LabeledDataset) -> f64 {
    let mut counts = vec![0usize; task.n_classes];
    for ex in &task.eval {
        counts[ex.label] += 1;
    }
    counts.into_iter().max().unwrap_or(0) as f64 / task.eval.len() as f64
}

/// One full training run at the shipped defaults (2,000 steps, Adam,
/// two-group learning rates), with the enrichment modules toggled.
fn run_task(
    enc: &FrozenEncoder,
    kind: TaskKind,
    seed: u64,
    use_fusion: bool,
    use_projection: bool,
) -> TaskRun {
    let task_cfg = TaskConfig {
        n_eval: EVAL_SIZE,
        seed: TASK_SEED_BASE + seed,
        ..TaskConfig::default()
    };
    let task = make_task(kind, &task_cfg).expect("task generates");
    let mut params = EptParams::init(
        &desk_budget(),
        &enc.embedding,
        DEFAULT_N_EXPERTS,
        FusionVariant::CrossAttention,
        use_fusion,
        use_projection,
        seed,
    )
    .expect("parameters initialize");
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let record = train(&mut params, enc, &task, &cfg).expect("training completes");
    TaskRun {
        kind,
        step0_accuracy: record.points[0].eval_accuracy,
        final_accuracy: record.final_eval,
        constant_accuracy: best_constant_accuracy(&task),
    }
}

/// The 3 tasks x 5 seeds full-pipeline runs, shared by the trainability
/// and ablation-direction checks.
static FULL_RUNS: OnceCell<Vec<TaskRun>> = OnceCell::new();

fn full_runs() -> &'static [TaskRun] {
    FULL_RUNS.get_or_init(|| {
        let enc = &*BACKBONE;
        let mut runs = Vec::new();
        for kind in TaskKind::ALL {
            for seed in SEEDS {
                runs.push(run_task(enc, kind, seed, true, true));
            }
        }
        runs
    })
}

fn bits(m: &Mat) -> Vec<u64> {
    m.data().iter().map(|x| x.to_bits()).collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// Criterion 1: budget arithmetic at the reference scale.

fn budget_arithmetic() -> Result<String, String> {
    let b60 = PromptBudget::solve(100, 60, 256, 768, BudgetMode::Exact)
        .map_err(|e| format!("s=60 failed to solve: {e}"))?;
    let b40 = PromptBudget::solve(100, 40, 256, 768, BudgetMode::Exact)
        .map_err(|e| format!("s=40 failed to solve: {e}"))?;
    let mut problems = Vec::new();
    if b60.r != 30 {
        problems.push(format!("s=60 solved r={}, want 30", b60.r));
    }
    if b40.r != 45 {
        problems.push(format!("s=40 solved r={}, want 45", b40.r));
    }
    for (b, tag) in [(&b60, "s=60"), (&b40, "s=40")] {
        if b.source_params() != 76_800 || b.decomposed_params() != 76_800 {
            problems.push(format!(
                "{tag}: source {} / decomposed {} trainable scalars, want 76800 both",
                b.source_params(),
                b.decomposed_params()
            ));
        }
    }
    if problems.is_empty() {
        Ok(
            "l=100, m=256, d=768: r(s=60)=30 and r(s=40)=45; both keep 76800 trainable scalars"
                .to_string(),
        )
    } else {
        Err(problems.join("; "))
    }
}

// ---------------------------------------------------------------------------
// Criterion 2: finite-difference gradient check on random geometries.

fn gradient_correctness() -> Result<String, String> {
    let reports = check_random_shapes(20, 0).map_err(|e| format!("checker failed: {e}"))?;
    let cross = reports
        .iter()
        .filter(|r| r.variant == FusionVariant::CrossAttention)
        .count();
    let checked: usize = reports.iter().map(|r| r.checked).sum();
    let max_rel = reports.iter().fold(0.0f64, |acc, r| acc.max(r.max_rel));
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.line())
        .collect();
    if failed.is_empty() {
        Ok(format!(
            "20 random shapes ({cross} cross_attention, {} literal_einsum), {checked} entries, \
             max relative difference {max_rel:.2e} <= 1e-4 at h=1e-5",
            20 - cross
        ))
    } else {
        Err(format!(
            "{} shapes failed: {}",
            failed.len(),
            failed.join(" | ")
        ))
    }
}

// ---------------------------------------------------------------------------
// Criterion 3: attention rows and gate rows are probability vectors.

fn normalization_invariants() -> Result<String, String> {
    let mut worst_attention = 0.0f64;
    let mut worst_gate = 0.0f64;
    for i in 0..1000u64 {
        let mut rng = rng_from_seed(i);
        let s = rng.gen_range(2..=8);
        let m = rng.gen_range(2..=8);
        let d = rng.gen_range(2..=8);
        let r = rng.gen_range(2..=8);
        let n_experts = rng.gen_range(2..=8);
        let p = Mat::random_uniform(s, d, -2.0, 2.0, &mut rng);
        let a = Mat::random_uniform(m, r, -2.0, 2.0, &mut rng);
        let b = Mat::random_uniform(r, d, -2.0, 2.0, &mut rng);
        let w = attention_weights(&p, &a, &b, FusionVariant::CrossAttention)
            .map_err(|e| format!("instance {i}: {e}"))?;
        for row in 0..s {
            let sum: f64 = (0..m).map(|col| w.weights.get(row, col)).sum();
            worst_attention = worst_attention.max((sum - 1.0).abs());
        }
        let gate =
            GateNet::init(n_experts, d, &mut rng).map_err(|e| format!("instance {i}: {e}"))?;
        let g = gate_weights(&p, &gate).map_err(|e| format!("instance {i}: {e}"))?;
        for row in 0..s {
            let sum: f64 = (0..n_experts).map(|col| g.get(row, col)).sum();
            worst_gate = worst_gate.max((sum - 1.0).abs());
        }
    }
    if worst_attention <= 1e-12 && worst_gate <= 1e-12 {
        Ok(format!(
            "1000 random instances: worst row-sum deviation {worst_attention:.1e} (attention), \
             {worst_gate:.1e} (gate), tolerance 1e-12"
        ))
    } else {
        Err(format!(
            "row sums drifted: attention {worst_attention:.2e}, gate {worst_gate:.2e} > 1e-12"
        ))
    }
}

// ---------------------------------------------------------------------------
// Criterion 4: the factor pair hits the optimal-error bound.
//
// Independent oracle: the optimal rank-r Frobenius error of a matrix T
// equals the root of the summed trailing eigenvalues of the Gram matrix
// T'T. The eigenvalues come from a plain cyclic Jacobi solver written
// here with loops only, sharing no code with the factorization under
// test.

fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &x| acc.max(x.abs()))
        .max(1e-300);
    for _sweep in 0..60 {
        let mut off_sq = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off_sq += a[p][q] * a[p][q];
            }
        }
        if off_sq <= (1e-15 * scale) * (1e-15 * scale) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

fn factorization_optimality() -> Result<String, String> {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let mut rng = rng_from_seed(4000 + i);
        let l = rng.gen_range(2..=12usize);
        let d = rng.gen_range(2..=10usize);
        let m = rng.gen_range(2..=12usize);
        let s = rng.gen_range(0..=l);
        let r = rng.gen_range(0..=m.min(d));
        // Only the shape fields matter for the factorization; the budget
        // equation is deliberately not solved here.
        let budget = PromptBudget {
            l,
            s,
            m,
            d,
            r,
            slack: 0,
        };
        let p = Mat::random_uniform(l, d, -1.5, 1.5, &mut rng);
        let dec = decompose(&p, &budget).map_err(|e| format!("matrix {i}: {e}"))?;

        // The factored target, rebuilt by the documented alignment rule:
        // cyclic row repetition up to m rows, prefix truncation past it.
        let t: Vec<Vec<f64>> = (0..m)
            .map(|row| (0..d).map(|col| p.get(row % l, col)).collect())
            .collect();

        // Loop-only Frobenius error of the factor product against T.
        let mut err_sq = 0.0;
        for row in 0..m {
            for col in 0..d {
                let mut prod = 0.0;
                for k in 0..r {
                    prod += dec.a.get(row, k) * dec.b.get(k, col);
                }
                let diff = t[row][col] - prod;
                err_sq += diff * diff;
            }
        }
        let frobenius_error = err_sq.sqrt();

        // Gram-matrix eigen oracle for the optimal rank-r error.
        let gram: Vec<Vec<f64>> = (0..d)
            .map(|x| {
                (0..d)
                    .map(|y| (0..m).map(|row| t[row][x] * t[row][y]).sum())
                    .collect()
            })
            .collect();
        let mut lambda = jacobi_eigenvalues(gram);
        lambda.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
        let lambda_max = lambda.first().copied().unwrap_or(0.0).max(0.0);
        // Eigenvalues at the numerical-zero floor are rank artifacts of
        // the cyclic row repetition; clamp them so the tail of an exactly
        // representable matrix is exactly zero.
        let tail_sum: f64 = lambda
            .iter()
            .skip(r)
            .map(|&x| if x > lambda_max * 1e-12 { x } else { 0.0 })
            .sum();
        let oracle = tail_sum.sqrt();
        worst = worst.max((frobenius_error - oracle).abs());
    }
    if worst <= 1e-8 {
        Ok(format!(
            "50 random matrices: |frobenius error - gram-eigen tail bound| at most {worst:.1e} \
             (tolerance 1e-8)"
        ))
    } else {
        Err(format!(
            "factor error missed the optimal bound by {worst:.2e} > 1e-8"
        ))
    }
}

// ---------------------------------------------------------------------------
// Criterion 5: degenerate geometries collapse to the simpler methods.

fn degenerate_modes() -> Result<String, String> {
    let mut rng = rng_from_seed(77);
    let vocab = Mat::random_uniform(64, 32, -1.0, 1.0, &mut rng);
    let b_r0 = PromptBudget::solve(15, 15, 16, 32, BudgetMode::Exact).map_err(|e| e.to_string())?;
    let b_s0 = PromptBudget::solve(15, 0, 16, 32, BudgetMode::Exact).map_err(|e| e.to_string())?;
    if b_r0.r != 0 || b_s0.s != 0 {
        return Err(format!(
            "unexpected degenerate geometry: {b_r0:?}, {b_s0:?}"
        ));
    }
    let init = |budget, fusion, projection, seed| {
        EptParams::init(
            budget,
            &vocab,
            DEFAULT_N_EXPERTS,
            FusionVariant::CrossAttention,
            fusion,
            projection,
            seed,
        )
        .map_err(|e| e.to_string())
    };
    // r=0 twice: bare, and with the enrichment modules left switched on.
    let plain = init(&b_r0, false, false, 1)?;
    let enriched = init(&b_r0, true, true, 2)?;
    let low_rank = init(&b_s0, true, true, 3)?;

    for i in 0..20 {
        let e = Mat::random_uniform(16, 32, -1.0, 1.0, &mut rng);
        let batch = std::slice::from_ref(&e);

        // (a) r=0: output bit-equals the vanilla concatenation [P; E].
        let out = &forward(&plain, batch).map_err(|e| e.to_string())?[0];
        let expect =
            Mat::concat_rows(&[&plain.decomposed.p_short, &e]).map_err(|e| e.to_string())?;
        if bits(out) != bits(&expect) {
            return Err(format!("batch {i}: r=0 output differs from [P; E]"));
        }
        // With modules on, the prompt may be enriched but there is still
        // no factor pair: the embedding block must pass through untouched.
        let out = &forward(&enriched, batch).map_err(|e| e.to_string())?[0];
        let p_new = prompt_matrix(&enriched).map_err(|e| e.to_string())?;
        let expect = Mat::concat_rows(&[&p_new, &e]).map_err(|e| e.to_string())?;
        if bits(out) != bits(&expect) || bits(&out.slice_rows(15, 16)) != bits(&e) {
            return Err(format!(
                "batch {i}: r=0 with modules on touched the embedding block"
            ));
        }

        // (b) s=0: output bit-equals the updated embedding E + A*B alone.
        let out = &forward(&low_rank, batch).map_err(|e| e.to_string())?[0];
        let ab = low_rank
            .decomposed
            .a
            .matmul(&low_rank.decomposed.b)
            .map_err(|e| e.to_string())?;
        let expect = e.add(&ab).map_err(|e| e.to_string())?;
        if out.rows() != 16 || bits(out) != bits(&expect) {
            return Err(format!("batch {i}: s=0 output differs from E + A*B"));
        }
    }
    Ok(
        "20 random batches each: r=0 bit-equals [P; E] with embeddings untouched; \
        s=0 bit-equals E + A*B with no prompt rows"
            .to_string(),
    )
}

// ---------------------------------------------------------------------------
// Criterion 6: baking changes nothing the network computes.

type LogitsAndLoss = (Mat, f64);

fn live_inference(
    enc: &FrozenEncoder,
    params: &EptParams<f64>,
    tokens: &[Vec<usize>],
    labels: &[usize],
) -> Result<LogitsAndLoss, String> {
    let mut tape = Tape::new();
    let enc_nodes = enc.register_frozen(&mut tape);
    let ept_nodes = params.register(&mut tape).map_err(|e| e.to_string())?;
    let p_new = build_prompt(&mut tape, params, &ept_nodes).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for seq in tokens {
        let padded = enc.pad_tokens(seq).map_err(|e| e.to_string())?;
        let emb = tape
            .gather_rows(enc_nodes.embedding, &padded)
            .map_err(|e| e.to_string())?;
        let input =
            build_training_input(&mut tape, &ept_nodes, p_new, emb).map_err(|e| e.to_string())?;
        rows.push(build_logits(&mut tape, &enc_nodes, &enc.cfg, input).map_err(|e| e.to_string())?);
    }
    let logits = tape.concat_rows(&rows).map_err(|e| e.to_string())?;
    let loss = tape
        .cross_entropy_mean(logits, labels)
        .map_err(|e| e.to_string())?;
    Ok((tape.value(logits).clone(), tape.value(loss).get(0, 0)))
}

fn baked_inference(
    enc: &FrozenEncoder,
    params: &EptParams<f64>,
    tokens: &[Vec<usize>],
    labels: &[usize],
) -> Result<LogitsAndLoss, String> {
    let baked = bake(params).map_err(|e| e.to_string())?;
    let mut tape = Tape::new();
    let enc_nodes = enc.register_frozen(&mut tape);
    let p_leaf = (baked.p_new.rows() > 0).then(|| tape.leaf(baked.p_new.clone()));
    let ab_leaf = if baked.a.cols() > 0 {
        Some(tape.leaf(baked.a.matmul(&baked.b).map_err(|e| e.to_string())?))
    } else {
        None
    };
    let mut rows = Vec::new();
    for seq in tokens {
        let padded = enc.pad_tokens(seq).map_err(|e| e.to_string())?;
        let emb = tape
            .gather_rows(enc_nodes.embedding, &padded)
            .map_err(|e| e.to_string())?;
        let i_up = match ab_leaf {
            Some(ab) => tape.add(emb, ab).map_err(|e| e.to_string())?,
            None => emb,
        };
        let input = match p_leaf {
            Some(p) => tape.concat_rows(&[p, i_up]).map_err(|e| e.to_string())?,
            None => i_up,
        };
        rows.push(build_logits(&mut tape, &enc_nodes, &enc.cfg, input).map_err(|e| e.to_string())?);
    }
    let logits = tape.concat_rows(&rows).map_err(|e| e.to_string())?;
    let loss = tape
        .cross_entropy_mean(logits, labels)
        .map_err(|e| e.to_string())?;
    Ok((tape.value(logits).clone(), tape.value(loss).get(0, 0)))
}

fn baking_equivalence() -> Result<String, String> {
    let enc = FrozenEncoder::init(&EncoderConfig::default()).map_err(|e| e.to_string())?;
    let budget = desk_budget();
    for i in 0..100u64 {
        let mut rng = rng_from_seed(5000 + i);
        let variant = if i % 2 == 0 {
            FusionVariant::CrossAttention
        } else {
            FusionVariant::LiteralEinsum
        };
        let params = EptParams::init(
            &budget,
            &enc.embedding,
            DEFAULT_N_EXPERTS,
            variant,
            true,
            true,
            i,
        )
        .map_err(|e| e.to_string())?;
        let tokens: Vec<Vec<usize>> = (0..4)
            .map(|_| {
                (0..enc.cfg.max_seq)
                    .map(|_| rng.gen_range(2..enc.cfg.vocab_size))
                    .collect()
            })
            .collect();
        let labels: Vec<usize> = (0..4)
            .map(|_| rng.gen_range(0..enc.cfg.n_classes))
            .collect();

        let (live_logits, live_loss) = live_inference(&enc, &params, &tokens, &labels)?;
        let (baked_logits, baked_loss) = baked_inference(&enc, &params, &tokens, &labels)?;
        if bits(&live_logits) != bits(&baked_logits) {
            return Err(format!("batch {i} ({variant}): logits differ after baking"));
        }
        if live_loss.to_bits() != baked_loss.to_bits() {
            return Err(format!("batch {i} ({variant}): loss differs after baking"));
        }
    }
    Ok(
        "100 random batches, both fusion variants: logits and loss bit-identical \
        between the live network and its baked prompt"
            .to_string(),
    )
}

// ---------------------------------------------------------------------------
// Criterion 7: the full pipeline actually learns the synthetic tasks.

fn trainability() -> Result<String, String> {
    let runs = full_runs();
    let mut parts = Vec::new();
    let mut all_pass = true;
    for kind in TaskKind::ALL {
        let task_runs: Vec<&TaskRun> = runs.iter().filter(|r| r.kind == kind).collect();
        let mut passing = 0usize;
        let mut threshold = 0.0f64;
        for run in &task_runs {
            threshold = 0.9 * (run.constant_accuracy + BASELINE_MARGIN);
            if run.final_accuracy >= threshold && run.final_accuracy > run.step0_accuracy {
                passing += 1;
            }
        }
        let majority = passing * 2 > task_runs.len();
        all_pass &= majority;
        parts.push(format!(
            "{kind} {passing}/{} seeds above {threshold:.3} with step-0 improvement",
            task_runs.len()
        ));
    }
    let detail = parts.join("; ");
    if all_pass {
        Ok(detail)
    } else {
        Err(format!("majority vote failed: {detail}"))
    }
}

// ---------------------------------------------------------------------------
// Criterion 8: the enrichment modules do not hurt on average.

fn ablation_direction() -> Result<String, String> {
    let full = mean(full_runs().iter().map(|r| r.final_accuracy));
    let enc = &*BACKBONE;
    let mut decomp_finals = Vec::new();
    for kind in TaskKind::ALL {
        for seed in SEEDS {
            decomp_finals.push(run_task(enc, kind, seed, false, false).final_accuracy);
        }
    }
    let decomp = mean(decomp_finals.into_iter());
    let detail = format!(
        "mean final accuracy over 3 tasks x 5 seeds: full {full:.4} vs decomposition-only {decomp:.4}"
    );
    if full >= decomp {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 9: step cost grows (weakly) with the retained prompt length.

fn timing_monotonicity() -> Result<String, String> {
    let enc = &*BACKBONE;
    let lengths = [0usize, 3, 6, 9, 12, 15];
    let mut medians = Vec::new();
    for &s in &lengths {
        let budget = PromptBudget::solve(15, s, 16, 32, BudgetMode::Exact)
            .map_err(|e| format!("s={s}: {e}"))?;
        let mut per_seed = Vec::new();
        for seed in SEEDS {
            let task_cfg = TaskConfig {
                n_eval: 32,
                seed: TASK_SEED_BASE + seed,
                ..TaskConfig::default()
            };
            let task =
                make_task(TaskKind::ContainsPattern, &task_cfg).map_err(|e| e.to_string())?;
            let mut params = EptParams::init(
                &budget,
                &enc.embedding,
                DEFAULT_N_EXPERTS,
                FusionVariant::CrossAttention,
                true,
                true,
                seed,
            )
            .map_err(|e| e.to_string())?;
            let cfg = TrainConfig {
                steps: 120,
                eval_every: 120,
                seed,
                ..TrainConfig::default()
            };
            let record = train(&mut params, enc, &task, &cfg).map_err(|e| e.to_string())?;
            per_seed.push(record.median_step_ms());
        }
        medians.push(median(&per_seed));
    }
    let listed = medians
        .iter()
        .map(|m| format!("{m:.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    let monotone = medians.windows(2).all(|w| w[1] >= w[0]);
    let detail =
        format!("median ms/step for s = 0, 3, 6, 9, 12, 15 (5 seeds, 120 steps): {listed}");
    if monotone {
        Ok(detail)
    } else {
        Err(format!("not non-decreasing: {detail}"))
    }
}

// ---------------------------------------------------------------------------
// Criterion 10: identical config and seed means identical bytes.

fn determinism() -> Result<String, String> {
    let enc = &*BACKBONE;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut artifacts: Vec<(String, Vec<u8>, Vec<u8>)> = Vec::new();
    for copy in 0..2 {
        let task_cfg = TaskConfig {
            n_eval: 64,
            seed: TASK_SEED_BASE,
            ..TaskConfig::default()
        };
        let task = make_task(TaskKind::MajorityHalf, &task_cfg).map_err(|e| e.to_string())?;
        let mut params = EptParams::init(
            &desk_budget(),
            &enc.embedding,
            DEFAULT_N_EXPERTS,
            FusionVariant::CrossAttention,
            true,
            true,
            0,
        )
        .map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            steps: 200,
            seed: 0,
            ..TrainConfig::default()
        };
        let record = train(&mut params, enc, &task, &cfg).map_err(|e| e.to_string())?;
        let ckpt = dir.path().join(format!("params-{copy}.ckpt"));
        write_ept_checkpoint(&ckpt, &params).map_err(|e| e.to_string())?;
        let baked = bake(&params).map_err(|e| e.to_string())?;
        let baked_path = dir.path().join(format!("baked-{copy}.bin"));
        write_baked_prompt(&baked_path, &baked, &params.budget, params.variant)
            .map_err(|e| e.to_string())?;
        artifacts.push((
            record.to_jsonl(),
            std::fs::read(&ckpt).map_err(|e| e.to_string())?,
            std::fs::read(&baked_path).map_err(|e| e.to_string())?,
        ));
    }
    let (log_a, ckpt_a, baked_a) = &artifacts[0];
    let (log_b, ckpt_b, baked_b) = &artifacts[1];
    if log_a != log_b {
        return Err("loss trajectories differ between identical runs".to_string());
    }
    if ckpt_a != ckpt_b {
        return Err("parameter checkpoints differ between identical runs".to_string());
    }
    if baked_a != baked_b {
        return Err("baked artifacts differ between identical runs".to_string());
    }
    Ok(
        "200-step run repeated twice: run log, parameter checkpoint, and baked \
        prompt byte-identical"
            .to_string(),
    )
}

// ---------------------------------------------------------------------------
// The gate.

#[test]
fn acceptance_gate() {
    // The backbone is shared by the learning-level checks; pretrain (or
    // load the cache) up front so per-criterion timings cover only the
    // checks themselves.
    let t = Instant::now();
    let enc = &*BACKBONE;
    let heldout = markov_corpus(enc.cfg.vocab_size, 128, 8, enc.cfg.max_seq, 100, 2)
        .expect("heldout corpus generates");
    let heldout_acc = masked_accuracy(enc, &heldout, 0).expect("masked accuracy evaluates");
    println!(
        "setup: backbone ready after {PRETRAIN_STEPS} masked-token steps \
         (heldout masked accuracy {heldout_acc:.4}) in {:.1}s",
        t.elapsed().as_secs_f64()
    );

    type Check = fn() -> Result<String, String>;
    let checks: [(&str, f64, Check); 10] = [
        ("budget arithmetic", 1.0, budget_arithmetic),
        ("gradient correctness", 120.0, gradient_correctness),
        ("normalization invariants", 10.0, normalization_invariants),
        ("factorization optimality", 30.0, factorization_optimality),
        ("degenerate modes", 5.0, degenerate_modes),
        ("baking equivalence", 10.0, baking_equivalence),
        ("trainability", 900.0, trainability),
        ("ablation direction", 1800.0, ablation_direction),
        ("timing monotonicity", 1200.0, timing_monotonicity),
        ("determinism", 300.0, determinism),
    ];

    let mut lines = Vec::new();
    let mut failed = 0usize;
    for (i, (name, limit, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let result = check();
        let elapsed = t.elapsed().as_secs_f64();
        let (mut passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let mut detail = detail;
        if passed && elapsed > *limit {
            passed = false;
            detail = format!("{detail}; but took {elapsed:.1}s > limit {limit:.0}s");
        }
        let line = format!(
            "[{}] criterion {:02} {:<25} {:>6.1}s (limit {:>4.0}s)  {}",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            name,
            elapsed,
            limit,
            detail
        );
        println!("{line}");
        if !passed {
            failed += 1;
        }
        lines.push(line);
    }
    assert_eq!(
        failed,
        0,
        "acceptance gate: {failed} of 10 criteria failed\n{}",
        lines.join("\n")
    );
}
