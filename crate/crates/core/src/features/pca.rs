use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureVector};
use crate::error::{Error, Result};

/// Fitted principal-component projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Retained components as rows (`retained_count x dim`), unit length.
    pub components: Vec<Vec<f64>>,
    /// Explained-variance ratio of every non-trivial component, descending.
    pub explained_variance_ratios: Vec<f64>,
    pub retained_count: usize,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }

    /// Maps projected coordinates back to the original space.
    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.retained_count {
            return Err(Error::DimensionMismatch {
                expected: self.retained_count,
                actual: z.len(),
            });
        }
        let mut out = self.mean.clone();
        for (c, &w) in self.components.iter().zip(z) {
            out.iter_mut().zip(c).for_each(|(o, c)| *o += w * c);
        }
        Ok(out)
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.retained_count).map(|i| format!("pc{i}")).collect()
    }
}

pub fn pca_fit(data: &Dataset, variance_retained: f64) -> Result<PcaModel> {
    pca_fit_rows(&data.rows, variance_retained)
}

/// Centres the rows and keeps the fewest leading components whose
/// explained-variance ratios add up to at least `variance_retained`.
///
/// Uses the covariance matrix when there are at least as many rows as
/// features and the Gram matrix otherwise.
pub fn pca_fit_rows(rows: &[Vec<f64>], variance_retained: f64) -> Result<PcaModel> {
    if !(variance_retained > 0.0 && variance_retained <= 1.0) {
        return Err(Error::invalid(format!(
            "retained variance must lie in (0, 1], got {variance_retained}"
        )));
    }
    let n = rows.len();
    if n < 2 {
        return Err(Error::DegenerateData(format!("PCA needs at least 2 rows, got {n}")));
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }

    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);

    // eigenpairs (variance, unit direction in feature space)
    let mut pairs: Vec<(f64, DVector<f64>)> = if d <= n {
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        eig.eigenvalues
            .iter()
            .zip(eig.eigenvectors.column_iter())
            .map(|(&v, c)| (v.max(0.0), c.into_owned()))
            .collect()
    } else {
        let gram = &centered * centered.transpose();
        let eig = SymmetricEigen::new(gram);
        eig.eigenvalues
            .iter()
            .zip(eig.eigenvectors.column_iter())
            .filter(|(&v, _)| v > 0.0)
            .map(|(&v, u)| {
                let dir = centered.transpose() * u / v.sqrt();
                (v / (n - 1) as f64, dir)
            })
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let total: f64 = pairs.iter().map(|p| p.0).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateData("all rows are identical".into()));
    }
    // components below this relative level are numerical noise
    let floor = total * 1e-14;
    pairs.retain(|p| p.0 > floor);
    let ratios: Vec<f64> = pairs.iter().map(|p| p.0 / total).collect();

    let mut retained = 0;
    let mut cumulative = 0.0;
    for r in &ratios {
        retained += 1;
        cumulative += r;
        if cumulative >= variance_retained - 1e-12 {
            break;
        }
    }

    let components = pairs
        .iter()
        .take(retained)
        .map(|(_, v)| {
            let mut v = v.clone();
            // sign convention: largest-magnitude entry positive
            let idx = v.iamax();
            if v[idx] < 0.0 {
                v.neg_mut();
            }
            v.normalize_mut();
            v.iter().copied().collect()
        })
        .collect();

    Ok(PcaModel {
        mean,
        components,
        explained_variance_ratios: ratios,
        retained_count: retained,
    })
}

pub fn pca_transform(model: &PcaModel, x: &FeatureVector) -> Result<FeatureVector> {
    Ok(FeatureVector {
        values: model.transform(&x.values)?,
        feature_names: model.feature_names(),
        label: x.label.clone(),
    })
}
