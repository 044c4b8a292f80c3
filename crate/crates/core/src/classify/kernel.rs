use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Kernel function `k(x, x')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `x . x'`
    Linear,
    /// `(alpha x . x' + coef0)^degree`
    Polynomial { alpha: f64, coef0: f64, degree: u32 },
    /// `exp(-gamma ||x - x'||^2)`
    Rbf { gamma: f64 },
}

impl KernelSpec {
    /// Gaussian kernel written with a width: `gamma = 1 / (2 sigma^2)`.
    pub fn rbf_with_sigma(sigma: f64) -> Self {
        KernelSpec::Rbf {
            gamma: 1.0 / (2.0 * sigma * sigma),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { alpha, coef0, degree } => {
                if degree == 0 {
                    Err(Error::invalid("polynomial degree must be >= 1"))
                } else if !alpha.is_finite() || !coef0.is_finite() {
                    Err(Error::invalid("polynomial kernel parameters must be finite"))
                } else {
                    Ok(())
                }
            }
            KernelSpec::Rbf { gamma } => {
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("rbf gamma must be positive, got {gamma}")))
                }
            }
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Polynomial { alpha, coef0, degree } => (alpha * dot(a, b) + coef0).powi(degree as i32),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: x2.len(),
        });
    }
    Ok(spec.eval_unchecked(x, x2))
}

/// Dense symmetric kernel matrix over a training set.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
}

impl GramMatrix {
    pub fn compute(kernel: &KernelSpec, rows: &[Vec<f64>], exec: Execution) -> Self {
        let n = rows.len();
        let upper: Vec<Vec<f64>> = par::map_range(exec, n, |i| {
            (i..n).map(|j| kernel.eval_unchecked(&rows[i], &rows[j])).collect()
        });
        let mut values = vec![0.0; n * n];
        for (i, row) in upper.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                let j = i + off;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}
