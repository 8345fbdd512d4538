//! First-order optimizers over named parameter sets.
//!
//! Learning rates are resolved per parameter name through a caller-supplied
//! closure, which is how the trainer gives the short prompt and the low-rank
//! factors different step sizes without the optimizer knowing about either.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{EptError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::tape::{Gradients, NamedParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = EptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(EptError::Contract(format!(
                "unknown optimizer '{other}' (expected adam or sgd)"
            ))),
        }
    }
}

/// Adam moment hyperparameters; defaults are the standard ones.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments<F> {
    first: Matrix<F>,
    second: Matrix<F>,
}

/// Optimizer with per-parameter state, reused across steps.
#[derive(Debug, Clone)]
pub struct Optimizer<F> {
    kind: OptimizerKind,
    adam: AdamConfig,
    moments: BTreeMap<String, Moments<F>>,
    step_count: usize,
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            adam: AdamConfig::default(),
            moments: BTreeMap::new(),
            step_count: 0,
        }
    }

    pub fn with_adam_config(kind: OptimizerKind, adam: AdamConfig) -> Self {
        Optimizer {
            kind,
            adam,
            moments: BTreeMap::new(),
            step_count: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Apply one update. `lr_for` maps a parameter name to its learning rate.
    pub fn step(
        &mut self,
        params: &mut NamedParams<F>,
        grads: &Gradients<F>,
        lr_for: &dyn Fn(&str) -> f64,
    ) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count;
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for name in names {
            let grad = grads.get(&name).ok_or_else(|| {
                EptError::Contract(format!("no gradient produced for parameter '{name}'"))
            })?;
            let lr = F::cast(lr_for(&name));
            let value = params.get_mut(&name).expect("name from iteration");
            match self.kind {
                OptimizerKind::Sgd => {
                    *value = value.sub(&grad.scale(lr))?;
                }
                OptimizerKind::Adam => {
                    let (rows, cols) = value.shape();
                    let entry = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                        first: Matrix::zeros(rows, cols),
                        second: Matrix::zeros(rows, cols),
                    });
                    let b1 = F::cast(self.adam.beta1);
                    let b2 = F::cast(self.adam.beta2);
                    let eps = F::cast(self.adam.eps);
                    entry.first = entry.first.scale(b1).add(&grad.scale(F::one() - b1))?;
                    let g2 = grad.hadamard(grad)?;
                    entry.second = entry.second.scale(b2).add(&g2.scale(F::one() - b2))?;
                    let c1 = F::one() - F::cast(self.adam.beta1.powi(t as i32));
                    let c2 = F::one() - F::cast(self.adam.beta2.powi(t as i32));
                    let mut update = Matrix::zeros(rows, cols);
                    for i in 0..rows {
                        for j in 0..cols {
                            let m_hat = entry.first.get(i, j) / c1;
                            let v_hat = entry.second.get(i, j) / c2;
                            update.set(i, j, lr * m_hat / (v_hat.sqrt() + eps));
                        }
                    }
                    *value = value.sub(&update)?;
                }
            }
        }
        Ok(())
    }
}
