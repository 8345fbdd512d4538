//! Finite-difference validation of tape gradients.
//!
//! For every scalar entry of every trainable parameter, the checker compares
//! the tape's analytic gradient against a central difference
//! `(f(θ + h·e) − f(θ − h·e)) / 2h`. ReLU makes the loss piecewise smooth;
//! when the two probes of an entry land on different sides of a kink the
//! finite difference is meaningless, so the entry is skipped and counted.
//! Kink detection compares the ReLU sign patterns of the two probe passes
//! ([`Tape::kink_fingerprint`]), which cannot mask a wrong gradient: a
//! corrupted analytic value still disagrees on every smooth entry.

use std::fmt;

use crate::error::{EptError, Result};
use crate::scalar::Scalar;
use crate::tape::{Gradients, NamedParams, NodeId, Tape};

/// A completed forward pass handed back by a model-building closure.
pub struct ForwardRun<F> {
    pub tape: Tape<F>,
    pub loss: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Probe half-width `h`.
    pub step: f64,
    /// Pass threshold on the relative difference.
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// Per-parameter comparison outcome.
#[derive(Debug, Clone)]
pub struct ParamReport {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    /// `(row, col, analytic, numeric)` of the worst relative difference.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Whole-model comparison outcome.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub params: Vec<ParamReport>,
    pub tolerance: f64,
}

impl GradReport {
    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.params.iter().map(|p| p.skipped).sum()
    }

    pub fn max_rel_diff(&self) -> f64 {
        self.params
            .iter()
            .fold(0.0, |acc, p| acc.max(p.max_rel_diff))
    }

    pub fn passed(&self) -> bool {
        self.max_rel_diff() <= self.tolerance
    }
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:>8} {:>8} {:>12} {:>12}",
            "parameter", "checked", "skipped", "max_abs", "max_rel"
        )?;
        for p in &self.params {
            writeln!(
                f,
                "{:<24} {:>8} {:>8} {:>12.3e} {:>12.3e}",
                p.name, p.checked, p.skipped, p.max_abs_diff, p.max_rel_diff
            )?;
            if let Some((r, c, a, n)) = p.worst {
                if p.max_rel_diff > self.tolerance {
                    writeln!(
                        f,
                        "    worst at ({r}, {c}): analytic {a:.6e} vs numeric {n:.6e}"
                    )?;
                }
            }
        }
        writeln!(
            f,
            "total: {} checked, {} skipped, max rel {:.3e} (tolerance {:.1e}) => {}",
            self.checked(),
            self.skipped(),
            self.max_rel_diff(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Check the tape's own backward pass for the model built by `build`.
pub fn grad_check<F: Scalar>(
    params: &NamedParams<F>,
    build: impl Fn(&NamedParams<F>) -> Result<ForwardRun<F>>,
    cfg: &GradCheckConfig,
) -> Result<GradReport> {
    let run = build(params)?;
    let analytic = run.tape.backward(run.loss)?;
    grad_check_against(params, build, &analytic, cfg)
}

/// Check externally supplied analytic gradients against central differences.
/// Split out so tests can feed deliberately corrupted gradients and confirm
/// the checker reports them.
pub fn grad_check_against<F: Scalar>(
    params: &NamedParams<F>,
    build: impl Fn(&NamedParams<F>) -> Result<ForwardRun<F>>,
    analytic: &Gradients<F>,
    cfg: &GradCheckConfig,
) -> Result<GradReport> {
    let base = probe(params, &build)?;
    if !base.0.is_finite() {
        return Err(EptError::Contract(format!(
            "base loss is not finite: {}",
            base.0
        )));
    }

    let mut reports = Vec::new();
    for (name, value) in params.iter() {
        let grad = analytic.get(name).ok_or_else(|| {
            EptError::Contract(format!("no analytic gradient for parameter '{name}'"))
        })?;
        let (rows, cols) = value.shape();
        let mut report = ParamReport {
            name: name.to_string(),
            checked: 0,
            skipped: 0,
            max_abs_diff: 0.0,
            max_rel_diff: 0.0,
            worst: None,
        };
        for row in 0..rows {
            for col in 0..cols {
                let (plus, fp_plus) = probe_shifted(params, &build, name, row, col, cfg.step)?;
                let (minus, fp_minus) = probe_shifted(params, &build, name, row, col, -cfg.step)?;
                if !plus.is_finite() || !minus.is_finite() {
                    return Err(EptError::ProbeNotFinite {
                        param: name.to_string(),
                        row,
                        col,
                    });
                }
                if fp_plus != fp_minus {
                    report.skipped += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * cfg.step);
                let a = grad.get(row, col).to_f64_lossless();
                let abs = (a - numeric).abs();
                let rel = abs / (a.abs() + numeric.abs() + 1e-8);
                report.checked += 1;
                report.max_abs_diff = report.max_abs_diff.max(abs);
                if rel > report.max_rel_diff {
                    report.max_rel_diff = rel;
                    report.worst = Some((row, col, a, numeric));
                }
            }
        }
        reports.push(report);
    }

    Ok(GradReport {
        params: reports,
        tolerance: cfg.tolerance,
    })
}

fn probe<F: Scalar>(
    params: &NamedParams<F>,
    build: &impl Fn(&NamedParams<F>) -> Result<ForwardRun<F>>,
) -> Result<(f64, u64)> {
    let run = build(params)?;
    let loss = run.tape.value(run.loss).get(0, 0).to_f64_lossless();
    Ok((loss, run.tape.kink_fingerprint()))
}

fn probe_shifted<F: Scalar>(
    params: &NamedParams<F>,
    build: &impl Fn(&NamedParams<F>) -> Result<ForwardRun<F>>,
    name: &str,
    row: usize,
    col: usize,
    delta: f64,
) -> Result<(f64, u64)> {
    let mut shifted = params.clone();
    let m = shifted
        .get_mut(name)
        .expect("parameter exists; came from iteration");
    let cur = m.get(row, col);
    m.set(row, col, cur + F::cast(delta));
    probe(&shifted, build)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{Axis, Matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Mat = Matrix<f64>;

    /// Smooth model: cross entropy of softmaxed linear features.
    fn smooth_build(params: &NamedParams<f64>) -> Result<ForwardRun<f64>> {
        let mut tape = Tape::new();
        let w = tape.param("w", params.get("w").unwrap().clone())?;
        let x = tape.leaf(Mat::from_rows(&[&[0.5, -1.0, 0.3], &[1.5, 0.2, -0.7]]));
        let logits = tape.matmul(x, w)?;
        let sm = tape.softmax(logits, Axis::Cols);
        let picked = tape.hadamard(sm, sm)?;
        let loss = tape.sum_all(picked);
        Ok(ForwardRun { tape, loss })
    }

    #[test]
    fn smooth_model_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let mut params = NamedParams::new();
        params.insert("w", Mat::random_uniform(3, 4, -1.0, 1.0, &mut rng));
        let report = grad_check(&params, smooth_build, &GradCheckConfig::default()).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.skipped(), 0);
        assert_eq!(report.checked(), 12);
    }

    #[test]
    fn kinked_entries_are_skipped_not_failed() {
        // One weight sits exactly on the ReLU kink; its two probes see
        // different active sets and the entry must be skipped.
        let mut params = NamedParams::new();
        params.insert("w", Mat::from_rows(&[&[0.0, 2.0, -3.0]]));
        let build = |p: &NamedParams<f64>| {
            let mut tape = Tape::new();
            let w = tape.param("w", p.get("w").unwrap().clone())?;
            let r = tape.relu(w);
            let loss = tape.sum_all(r);
            Ok(ForwardRun { tape, loss })
        };
        let report = grad_check(&params, build, &GradCheckConfig::default()).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.skipped(), 1);
        assert_eq!(report.checked(), 2);
    }

    /// Wrap a raw matrix as a `Gradients` value: the gradient of
    /// `sum(p ⊙ c)` with respect to `p` is exactly `c`.
    fn gradients_from(name: &str, values: Mat) -> Gradients<f64> {
        let mut tape = Tape::new();
        let (rows, cols) = values.shape();
        let p = tape.param(name, Mat::zeros(rows, cols)).unwrap();
        let c = tape.leaf(values);
        let prod = tape.hadamard(p, c).unwrap();
        let loss = tape.sum_all(prod);
        tape.backward(loss).unwrap()
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let mut params = NamedParams::new();
        params.insert("w", Mat::random_uniform(3, 4, -1.0, 1.0, &mut rng));
        let run = smooth_build(&params).unwrap();
        let good = run.tape.backward(run.loss).unwrap();

        let mut corrupted = good.get("w").unwrap().clone();
        corrupted.set(1, 2, corrupted.get(1, 2) + 0.3);
        let corrupted = gradients_from("w", corrupted);

        let report = grad_check_against(
            &params,
            smooth_build,
            &corrupted,
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(!report.passed(), "corruption went unnoticed: {report}");
        let worst = report.params[0].worst.unwrap();
        assert_eq!((worst.0, worst.1), (1, 2));
    }

    #[test]
    fn non_finite_base_loss_is_an_error() {
        let mut params = NamedParams::new();
        params.insert("w", Mat::from_rows(&[&[f64::NAN]]));
        let build = |p: &NamedParams<f64>| {
            let mut tape = Tape::new();
            let w = tape.param("w", p.get("w").unwrap().clone())?;
            let loss = tape.sum_all(w);
            Ok(ForwardRun { tape, loss })
        };
        assert!(grad_check(&params, build, &GradCheckConfig::default()).is_err());
    }
}
