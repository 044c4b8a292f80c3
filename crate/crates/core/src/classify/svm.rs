use serde::{Deserialize, Serialize};

use super::kernel::{GramMatrix, KernelSpec};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// SMO solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Box constraint `C`.
    pub c: f64,
    /// Stop once the maximal KKT violation falls below this.
    pub tol: f64,
    /// Iteration cap; `None` means `max(10_000_000, 100 n)`.
    pub max_iter: Option<usize>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_iter: None,
        }
    }
}

impl SvmConfig {
    pub fn with_c(c: f64) -> Self {
        Self { c, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("SVM tolerance must be positive"));
        }
        Ok(())
    }
}

/// Trained two-class SVM. The decision function is
/// `sum_i dual_coefficients[i] * k(sv_i, x) + bias`; `bias` is the negated
/// offset of the `w.x - b` convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coefficients: Vec<f64>,
    /// Row indices of the support vectors in the training set.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    pub iterations: usize,
}

impl BinarySvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coefficients)
            .map(|(sv, a)| a * self.kernel.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias)
    }
}

pub fn svm_decision(model: &BinarySvmModel, x: &[f64]) -> Result<f64> {
    model.decision(x)
}

pub fn svm_train_binary(x: &[Vec<f64>], y: &[f64], kernel: KernelSpec, c: f64) -> Result<BinarySvmModel> {
    svm_train_binary_with(x, y, kernel, &SvmConfig::with_c(c))
}

pub fn svm_train_binary_with(
    x: &[Vec<f64>],
    y: &[f64],
    kernel: KernelSpec,
    config: &SvmConfig,
) -> Result<BinarySvmModel> {
    check_training_rows(x, y.len())?;
    kernel.validate()?;
    let gram = GramMatrix::compute(&kernel, x, Execution::Sequential);
    train_on_gram(x, &gram, y, kernel, config)
}

fn check_training_rows(x: &[Vec<f64>], n_labels: usize) -> Result<()> {
    if x.len() != n_labels {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: n_labels,
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateData("SVM needs at least 2 samples".into()));
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    Ok(())
}

/// Result of the dual solver before support vectors are extracted.
struct DualSolution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
}

pub(crate) fn train_on_gram(
    x: &[Vec<f64>],
    gram: &GramMatrix,
    y: &[f64],
    kernel: KernelSpec,
    config: &SvmConfig,
) -> Result<BinarySvmModel> {
    config.validate()?;
    if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::invalid(format!("SVM labels must be +1 or -1, got {bad}")));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::DegenerateData("SVM training needs both classes present".into()));
    }
    let sol = smo(gram, y, config)?;
    let mut model = BinarySvmModel {
        support_vectors: Vec::new(),
        dual_coefficients: Vec::new(),
        support_indices: Vec::new(),
        bias: -sol.rho,
        kernel,
        c: config.c,
        iterations: sol.iterations,
    };
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            model.support_vectors.push(x[i].clone());
            model.dual_coefficients.push(a * y[i]);
            model.support_indices.push(i);
        }
    }
    Ok(model)
}

const TAU: f64 = 1e-12;

/// Sequential minimal optimization of
/// `min 1/2 a'Qa - e'a  s.t.  y'a = 0, 0 <= a <= C` with `Q_ij = y_i y_j K_ij`,
/// using second-order working-set selection.
fn smo(gram: &GramMatrix, y: &[f64], config: &SvmConfig) -> Result<DualSolution> {
    let n = y.len();
    let c = config.c;
    let max_iter = config.max_iter.unwrap_or((100 * n).max(10_000_000));
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * gram.get(i, j);

    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        // i: maximal violating index from the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut sel_i = None;
        for t in 0..n {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    sel_i = Some(t);
                }
            }
        }
        // j: largest objective decrease from the "low" set
        let mut gmax2 = f64::NEG_INFINITY;
        let mut sel_j = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = sel_i {
            for t in 0..n {
                if in_low(alpha[t], y[t]) {
                    let yg = y[t] * grad[t];
                    gmax2 = gmax2.max(yg);
                    let diff = gmax + yg;
                    if diff > 0.0 {
                        let mut quad = gram.get(i, i) + gram.get(t, t) - 2.0 * gram.get(i, t);
                        if quad <= 0.0 {
                            quad = TAU;
                        }
                        let obj = -(diff * diff) / quad;
                        if obj < obj_min {
                            obj_min = obj;
                            sel_j = Some(t);
                        }
                    }
                }
            }
        }
        let gap = gmax + gmax2;
        let (i, j) = match (sel_i, sel_j) {
            (Some(i), Some(j)) if gap >= config.tol => (i, j),
            _ => break,
        };
        if iterations >= max_iter {
            return Err(Error::SvmNotConverged {
                iterations,
                gap,
                tolerance: config.tol,
            });
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = gram.get(i, i) + gram.get(j, j) - 2.0 * gram.get(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (k, g) in grad.iter_mut().enumerate() {
            *g += q(k, i) * di + q(k, j) * dj;
        }
    }

    Ok(DualSolution {
        rho: compute_rho(&alpha, &grad, y, c),
        alpha,
        iterations,
    })
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for ((&a, &g), &yi) in alpha.iter().zip(grad).zip(y) {
        let yg = yi * g;
        if a >= c {
            if yi < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if a <= 0.0 {
            if yi > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// One-against-all ensemble: model `i` separates class `i` from the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvaSvmModel {
    pub models: Vec<BinarySvmModel>,
    pub class_names: Vec<String>,
}

impl OvaSvmModel {
    pub fn decisions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.decision(x)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.decisions(x)?))
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn ova_train(data: &crate::features::Dataset, kernel: KernelSpec, c: f64) -> Result<OvaSvmModel> {
    data.require_trainable()?;
    ova_train_rows(
        &data.rows,
        &data.labels,
        &data.class_names,
        kernel,
        &SvmConfig::with_c(c),
        Execution::default(),
    )
}

/// Trains all one-vs-rest problems on a shared kernel matrix.
pub fn ova_train_rows(
    rows: &[Vec<f64>],
    labels: &[usize],
    class_names: &[String],
    kernel: KernelSpec,
    config: &SvmConfig,
    exec: Execution,
) -> Result<OvaSvmModel> {
    check_training_rows(rows, labels.len())?;
    kernel.validate()?;
    if class_names.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "one-against-all needs at least 2 classes, got {}",
            class_names.len()
        )));
    }
    for (k, name) in class_names.iter().enumerate() {
        if !labels.contains(&k) {
            return Err(Error::DegenerateData(format!("class {name:?} has no training rows")));
        }
    }
    let gram = GramMatrix::compute(&kernel, rows, exec);
    let models = par::try_map_range(exec, class_names.len(), |k| {
        let y: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        train_on_gram(rows, &gram, &y, kernel, config)
    })?;
    Ok(OvaSvmModel {
        models,
        class_names: class_names.to_vec(),
    })
}

pub fn ova_predict(model: &OvaSvmModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}
