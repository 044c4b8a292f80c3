use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, nearest};
use super::svm::argmax;
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// EM settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmConfig {
    pub components: usize,
    /// Stop once the mean per-sample log-likelihood improves by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Floor on every diagonal covariance entry.
    pub reg: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            components: 8,
            tol: 1e-6,
            max_iter: 200,
            reg: 1e-6,
            seed: 0,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::invalid("GMM needs at least one component"));
        }
        if !(self.tol >= 0.0) || !(self.reg > 0.0) || self.max_iter == 0 {
            return Err(Error::invalid("GMM tol must be >= 0, reg > 0 and max_iter >= 1"));
        }
        Ok(())
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Per-component diagonal variances.
    pub variances: Vec<Vec<f64>>,
}

impl GmmModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `ln w_k + ln g(x | mu_k, Sigma_k)` for every component.
    fn weighted_log_densities(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(w, (mu, var))| {
                let quad: f64 = x
                    .iter()
                    .zip(mu.iter().zip(var))
                    .map(|(xi, (m, v))| (2.0 * PI * v).ln() + (xi - m) * (xi - m) / v)
                    .sum();
                w.ln() - 0.5 * quad
            })
            .collect()
    }

    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(log_sum_exp(&self.weighted_log_densities(x)))
    }

    /// Posterior membership of `x` in each component.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut l = self.weighted_log_densities(x);
        let total = log_sum_exp(&l);
        l.iter_mut().for_each(|v| *v = (*v - total).exp());
        Ok(l)
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn gmm_log_likelihood(model: &GmmModel, x: &[f64]) -> Result<f64> {
    model.log_likelihood(x)
}

/// Fitted mixture with its training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total training log-likelihood after initialization and each M-step.
    pub log_likelihood_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn gmm_fit(x: &[Vec<f64>], k: usize, seed: u64, tol: f64, max_iter: usize) -> Result<GmmFit> {
    gmm_fit_with(
        x,
        &GmmConfig {
            components: k,
            tol,
            max_iter,
            seed,
            ..GmmConfig::default()
        },
    )
}

/// EM from a k-means start.
pub fn gmm_fit_with(x: &[Vec<f64>], config: &GmmConfig) -> Result<GmmFit> {
    config.validate()?;
    let n = x.len();
    let k = config.components;
    if k >= n {
        return Err(Error::invalid(format!(
            "GMM needs more rows than components: {n} rows, K = {k}"
        )));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::invalid("GMM needs at least one feature"));
    }
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    if x.iter().all(|r| r == &x[0]) {
        return Err(Error::DegenerateData("all GMM training rows are identical".into()));
    }

    let mut model = initial_model(x, k, config)?;
    let mut history = Vec::new();
    let mut resp = vec![vec![0.0; k]; n];
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let ll = e_step(&model, x, &mut resp);
        if let Some(&prev) = history.last() {
            if (ll - prev) / (n as f64) < config.tol {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        if iterations == config.max_iter {
            break;
        }
        m_step(&mut model, x, &resp, config.reg);
        iterations += 1;
    }
    Ok(GmmFit {
        model,
        log_likelihood_history: history,
        iterations,
        converged,
    })
}

fn initial_model(x: &[Vec<f64>], k: usize, config: &GmmConfig) -> Result<GmmModel> {
    let d = x[0].len();
    let centers = kmeans(x, k, config.seed)?;
    let global_var: Vec<f64> = (0..d)
        .map(|j| {
            let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            crate::stats::std_dev(&col).powi(2).max(config.reg)
        })
        .collect();
    let mut members: Vec<Vec<&Vec<f64>>> = vec![Vec::new(); k];
    for r in x {
        members[nearest(r, &centers)].push(r);
    }
    let counts: Vec<f64> = members.iter().map(|m| m.len().max(1) as f64).collect();
    let total: f64 = counts.iter().sum();
    let weights = counts.iter().map(|c| c / total).collect();
    let variances = members
        .iter()
        .zip(&centers)
        .map(|(m, c)| {
            if m.len() < 2 {
                return global_var.clone();
            }
            (0..d)
                .map(|j| {
                    let v = m.iter().map(|r| (r[j] - c[j]).powi(2)).sum::<f64>() / m.len() as f64;
                    v.max(config.reg)
                })
                .collect()
        })
        .collect();
    Ok(GmmModel {
        weights,
        means: centers,
        variances,
    })
}

/// Fills `resp` with memberships and returns the total log-likelihood.
fn e_step(model: &GmmModel, x: &[Vec<f64>], resp: &mut [Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (r, row) in resp.iter_mut().zip(x) {
        let l = model.weighted_log_densities(row);
        let lse = log_sum_exp(&l);
        total += lse;
        r.iter_mut().zip(&l).for_each(|(ri, li)| *ri = (li - lse).exp());
    }
    total
}

fn m_step(model: &mut GmmModel, x: &[Vec<f64>], resp: &[Vec<f64>], reg: f64) {
    let n = x.len() as f64;
    let d = model.dim();
    for k in 0..model.components() {
        let nk: f64 = resp.iter().map(|r| r[k]).sum();
        if nk <= f64::MIN_POSITIVE {
            // an abandoned component keeps its parameters with negligible weight
            model.weights[k] = f64::MIN_POSITIVE;
            continue;
        }
        model.weights[k] = nk / n;
        let mut mean = vec![0.0; d];
        for (r, row) in resp.iter().zip(x) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += r[k] * v);
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; d];
        for (r, row) in resp.iter().zip(x) {
            var.iter_mut()
                .zip(row.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += r[k] * (v - m) * (v - m));
        }
        var.iter_mut().for_each(|s| *s = (*s / nk).max(reg));
        model.means[k] = mean;
        model.variances[k] = var;
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
}

/// One mixture per class; prediction is the maximum-likelihood class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmBank {
    pub models: Vec<GmmModel>,
    pub class_names: Vec<String>,
}

impl GmmBank {
    /// Fits every class independently. Class `i` uses seed `config.seed + i`,
    /// and the component count is capped at one less than the class size.
    pub fn fit(
        rows: &[Vec<f64>],
        labels: &[usize],
        class_names: &[String],
        config: &GmmConfig,
        exec: Execution,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                actual: labels.len(),
            });
        }
        let models = par::try_map_range(exec, class_names.len(), |c| {
            let members: Vec<Vec<f64>> = rows
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(r, _)| r.clone())
                .collect();
            if members.len() < 2 {
                return Err(Error::DegenerateData(format!(
                    "class {:?} has {} training rows; a GMM needs at least 2",
                    class_names[c],
                    members.len()
                )));
            }
            let components = config.components.min(members.len() - 1);
            if components < config.components {
                log::debug!(
                    "class {:?}: using {components} components for {} rows",
                    class_names[c],
                    members.len()
                );
            }
            let cfg = GmmConfig {
                components,
                seed: config.seed.wrapping_add(c as u64),
                ..*config
            };
            gmm_fit_with(&members, &cfg).map(|f| f.model)
        })?;
        Ok(Self {
            models,
            class_names: class_names.to_vec(),
        })
    }

    pub fn log_likelihoods(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.log_likelihood(x)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.log_likelihoods(x)?))
    }
}

pub fn gmm_bank_predict(bank: &GmmBank, x: &[f64]) -> Result<usize> {
    bank.predict(x)
}
