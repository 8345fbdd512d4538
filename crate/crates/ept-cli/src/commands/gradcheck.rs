//! `gradcheck` — verify reverse-mode gradients of the whole prompt
//! pipeline against central finite differences on randomly drawn
//! geometries, alternating between both fusion variants.

use ept_core::pipeline::{build_prompt, build_training_input};
use ept_core::projection::{Expert, GateHead};
use ept_core::rng::{derive_seed, rng_from_seed};
use ept_core::{
    grad_check, DecomposedPrompt, EptParams, ExpertStack, ForwardRun, FusionVariant, GateNet,
    GradCheckConfig, Matrix, PromptBudget, Tape,
};
use rand::Rng;

use crate::error::{CliError, CliResult};
use crate::output::write_text;
use crate::runner::ExperimentSpec;

pub struct ShapeReport {
    pub index: usize,
    pub s: usize,
    pub m: usize,
    pub d: usize,
    pub r: usize,
    pub n_experts: usize,
    pub variant: FusionVariant,
    pub checked: usize,
    pub max_rel: f64,
    pub passed: bool,
}

impl ShapeReport {
    pub fn line(&self) -> String {
        format!(
            "shape {:02}: s={} m={} d={} r={} experts={} {:<16} {:>5} entries, max rel {:.3e} => {}",
            self.index,
            self.s,
            self.m,
            self.d,
            self.r,
            self.n_experts,
            self.variant.to_string(),
            self.checked,
            self.max_rel,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

fn random_params<R: Rng>(
    s: usize,
    m: usize,
    d: usize,
    r: usize,
    n_experts: usize,
    variant: FusionVariant,
    rng: &mut R,
) -> CliResult<EptParams<f64>> {
    let mat = |rows, cols, rng: &mut R| Matrix::random_uniform(rows, cols, -0.7, 0.7, rng);
    let decomposed = DecomposedPrompt {
        p_short: mat(s, d, rng),
        a: mat(m, r, rng),
        b: mat(r, d, rng),
    };
    let experts: Vec<Expert<f64>> = (0..n_experts)
        .map(|_| Expert {
            w_down: mat(d, m, rng),
            b_down: mat(1, m, rng),
            w_up: mat(m, d, rng),
            b_up: mat(1, d, rng),
        })
        .collect();
    let heads: Vec<GateHead<f64>> = (0..n_experts)
        .map(|_| GateHead {
            weight: mat(d, 1, rng),
            bias: mat(1, 1, rng),
        })
        .collect();
    Ok(EptParams {
        // Only the shape fields matter here; the budget equation is not
        // enforced for a gradient probe.
        budget: PromptBudget {
            l: s,
            s,
            m,
            d,
            r,
            slack: 0,
        },
        decomposed,
        experts: ExpertStack::from_experts(experts)?,
        gate: GateNet::from_heads(heads)?,
        variant,
        use_fusion: true,
        use_projection: true,
    })
}

/// Check one random geometry; the scalar probed is the squared magnitude
/// of the pipeline's training input for a fixed random embedded batch.
fn check_shape(index: usize, seed: u64) -> CliResult<ShapeReport> {
    let mut rng = rng_from_seed(derive_seed(seed, &format!("shape-{index}")));
    let s = rng.gen_range(2..=8);
    let m = rng.gen_range(2..=8);
    let d = rng.gen_range(2..=8);
    let r = rng.gen_range(2..=8);
    let n_experts = rng.gen_range(2..=8);
    let variant = if index % 2 == 0 {
        FusionVariant::CrossAttention
    } else {
        FusionVariant::LiteralEinsum
    };
    let params = random_params(s, m, d, r, n_experts, variant, &mut rng)?;
    let embedded = Matrix::random_uniform(m, d, -0.7, 0.7, &mut rng);

    let named = params.to_named_params();
    let report = grad_check(
        &named,
        |candidate| {
            let mut p = params.clone();
            p.absorb_named_params(candidate)?;
            let mut tape = Tape::new();
            let nodes = p.register(&mut tape)?;
            let p_new = build_prompt(&mut tape, &p, &nodes)?;
            let e = tape.leaf(embedded.clone());
            let x = build_training_input(&mut tape, &nodes, p_new, e)?;
            let sq = tape.hadamard(x, x)?;
            let loss = tape.sum_all(sq);
            Ok(ForwardRun { tape, loss })
        },
        &GradCheckConfig::default(),
    )?;
    Ok(ShapeReport {
        index,
        s,
        m,
        d,
        r,
        n_experts,
        variant,
        checked: report.checked(),
        max_rel: report.max_rel_diff(),
        passed: report.passed(),
    })
}

/// Run `n` random geometries; reports come back in index order.
pub fn check_random_shapes(n: usize, seed: u64) -> CliResult<Vec<ShapeReport>> {
    (0..n).map(|i| check_shape(i, seed)).collect()
}

pub fn run(spec: &ExperimentSpec) -> CliResult<()> {
    let cfg = &spec.config;
    let shapes = cfg.usize("gradcheck.shapes", 20)?;
    let seed = cfg.u64("gradcheck.seed", 0)?;
    let reports = check_random_shapes(shapes, seed)?;

    let mut text = String::new();
    for rep in &reports {
        let line = rep.line();
        println!("{line}");
        text.push_str(&line);
        text.push('\n');
    }
    let failures = reports.iter().filter(|r| !r.passed).count();
    let summary = format!(
        "{} shapes checked, {} failed (tolerance {:.1e})",
        reports.len(),
        failures,
        GradCheckConfig::default().tolerance
    );
    println!("{summary}");
    text.push_str(&summary);
    text.push('\n');
    write_text(&spec.out_dir.join("gradcheck.txt"), &text)?;

    if failures > 0 {
        return Err(CliError::CheckFailed(summary));
    }
    Ok(())
}
