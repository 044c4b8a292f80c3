use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature z-score parameters. Constant features keep a unit scale so
/// they map to zero rather than NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::DegenerateData("cannot standardize zero rows".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: r.len(),
                });
            }
            means.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stds = vec![0.0; d];
        for r in rows {
            stds.iter_mut()
                .zip(r.iter().zip(&means))
                .for_each(|(s, (v, m))| *s += (v - m).powi(2));
        }
        stds.iter_mut().for_each(|s| {
            *s = (*s / n).sqrt();
            if *s <= f64::EPSILON {
                *s = 1.0;
            }
        });
        Ok(Self { means, stds })
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                actual: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_columns() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&rows).unwrap();
        assert_eq!(s.means, [2.0, 5.0]);
        assert_eq!(s.stds, [1.0, 1.0]);
        assert_eq!(s.transform(&[3.0, 5.0]).unwrap(), [1.0, 0.0]);
        assert!(s.transform(&[1.0]).is_err());
        assert!(Standardizer::fit(&[]).is_err());
    }
}
