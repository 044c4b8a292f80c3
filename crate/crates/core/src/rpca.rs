//! Robust PCA by the inexact augmented Lagrange multiplier method, and its
//! use for splitting a mixture spectrogram into a low-rank accompaniment and
//! a sparse voice.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::spectral::{istft, Spectrogram};

/// Upper bound on the penalty growth, relative to the initial penalty.
const MU_CEILING_FACTOR: f64 = 1e7;

/// Solver parameters. `lambda` and `mu0` default to data-dependent values
/// when left unset: `1/sqrt(max(n, p))` and `1.25 / ||V||_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RpcaConfig {
    pub lambda: Option<f64>,
    pub mu0: Option<f64>,
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RpcaConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            mu0: None,
            rho: 1.6,
            tol: 1e-7,
            max_iter: 500,
        }
    }
}

impl RpcaConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: Option<f64>| v.is_none_or(|x| x > 0.0 && x.is_finite());
        if !positive(self.lambda) {
            return Err(Error::invalid("RPCA lambda must be positive"));
        }
        if !positive(self.mu0) {
            return Err(Error::invalid("RPCA mu0 must be positive"));
        }
        if !(self.rho > 1.0) {
            return Err(Error::invalid("RPCA rho must exceed 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("RPCA tolerance must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("RPCA max_iter must be at least 1"));
        }
        Ok(())
    }

    pub fn lambda_for(&self, rows: usize, cols: usize) -> f64 {
        self.lambda.unwrap_or_else(|| 1.0 / (rows.max(cols) as f64).sqrt())
    }
}

/// `V ≈ L + S` with `L` low-rank and `S` sparse.
#[derive(Debug, Clone)]
pub struct RpcaDecomposition {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub iterations: usize,
    /// `||V - L - S||_F / ||V||_F` after the last iteration.
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

/// Elementwise shrinkage `sign(m) * max(|m| - tau, 0)`.
pub fn soft_threshold(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    m.map(|v| shrink(v, tau))
}

#[inline]
pub(crate) fn shrink(v: f64, tau: f64) -> f64 {
    let mag = v.abs() - tau;
    if mag > 0.0 {
        mag.copysign(v)
    } else {
        0.0
    }
}

/// Proximal operator of `tau * ||.||_*`: shrink every singular value by `tau`.
pub fn singular_value_threshold(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::invalid(format!("threshold must be >= 0, got {tau}")));
    }
    let (u, sigma, v_t) = svd(m)?;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, &s) in sigma.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk <= 0.0 {
            continue;
        }
        out.ger(shrunk, &u.column(i), &v_t.row(i).transpose(), 1.0);
    }
    Ok(out)
}

type Svd = (DMatrix<f64>, Vec<f64>, DMatrix<f64>);

fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Svd("matrix has non-finite entries".into()));
    }
    let decomposition = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Svd("iteration did not converge".into()))?;
    let u = decomposition.u.ok_or_else(|| Error::Svd("missing U".into()))?;
    let v_t = decomposition.v_t.ok_or_else(|| Error::Svd("missing V^T".into()))?;
    Ok((u, decomposition.singular_values.iter().copied().collect(), v_t))
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Svd("matrix has non-finite entries".into()));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let s = m
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Svd("iteration did not converge".into()))?;
    Ok(s.singular_values.max())
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(svd(m)?.1.iter().sum())
}

/// Inexact ALM iteration:
///
/// ```text
/// L <- SVT(V - S + Y/mu, 1/mu)
/// S <- shrink(V - L + Y/mu, lambda/mu)
/// Y <- Y + mu (V - L - S)
/// mu <- rho mu
/// ```
///
/// Stops when the relative residual drops below `tol` or after `max_iter`
/// iterations; in the latter case `converged` is false.
pub fn rpca_alm(v: &DMatrix<f64>, config: &RpcaConfig) -> Result<RpcaDecomposition> {
    config.validate()?;
    if v.is_empty() {
        return Err(Error::invalid("RPCA input matrix is empty"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("RPCA input contains non-finite entries"));
    }
    let (rows, cols) = v.shape();
    let v_norm = v.norm();
    if v_norm == 0.0 {
        return Ok(RpcaDecomposition {
            low_rank: DMatrix::zeros(rows, cols),
            sparse: DMatrix::zeros(rows, cols),
            iterations: 1,
            final_residual: 0.0,
            residual_history: vec![0.0],
            converged: true,
        });
    }

    let lambda = config.lambda_for(rows, cols);
    let norm_two = spectral_norm(v)?;
    let norm_inf = v.amax() / lambda;
    let mut y = v / norm_two.max(norm_inf);
    let mut mu = config.mu0.unwrap_or(1.25 / norm_two);
    let mu_ceiling = mu * MU_CEILING_FACTOR;

    let mut low_rank = DMatrix::zeros(rows, cols);
    let mut sparse = DMatrix::zeros(rows, cols);
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;

    for _ in 0..config.max_iter {
        let inv_mu = 1.0 / mu;
        low_rank = singular_value_threshold(&(v - &sparse + &y * inv_mu), inv_mu)?;
        sparse = soft_threshold(&(v - &low_rank + &y * inv_mu), lambda * inv_mu);
        let gap = v - &low_rank - &sparse;
        residual = gap.norm() / v_norm;
        history.push(residual);
        y += gap * mu;
        mu = (mu * config.rho).min(mu_ceiling);
        if residual < config.tol {
            break;
        }
    }

    Ok(RpcaDecomposition {
        low_rank,
        sparse,
        iterations: history.len(),
        final_residual: residual,
        converged: residual < config.tol,
        residual_history: history,
    })
}

/// Voice and accompaniment stems recovered from one mixture.
#[derive(Debug, Clone)]
pub struct Separation {
    pub voice: AudioClip,
    pub accompaniment: AudioClip,
    pub decomposition: RpcaDecomposition,
}

/// Runs RPCA on the magnitude spectrogram, clamps negative magnitudes to
/// zero, reattaches the mixture phase and inverts both parts.
pub fn separate_voice(spec: &Spectrogram, config: &RpcaConfig) -> Result<Separation> {
    let magnitude = spec.magnitude();
    let decomposition = rpca_alm(&magnitude, config)?;
    let phase = spec.phase();
    let resynth = |part: &DMatrix<f64>| -> Result<AudioClip> {
        let bins =
            DMatrix::<Complex64>::from_fn(part.nrows(), part.ncols(), |i, j| phase[(i, j)] * part[(i, j)].max(0.0));
        istft(&spec.with_bins(bins)?)
    };
    let voice = resynth(&decomposition.sparse)?;
    let accompaniment = resynth(&decomposition.low_rank)?;
    Ok(Separation {
        voice,
        accompaniment,
        decomposition,
    })
}
