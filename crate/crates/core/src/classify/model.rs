use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::gmm::{GmmBank, GmmConfig};
use super::kernel::KernelSpec;
use super::svm::{ova_train_rows, OvaSvmModel, SvmConfig};
use crate::error::{Error, Result};
use crate::features::{pca_fit_rows, Dataset, PcaModel, Standardizer};
use crate::par::{self, Execution};

/// Classifier family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "svm-linear")]
    SvmLinear,
    #[serde(rename = "svm-poly")]
    SvmPoly,
    #[serde(rename = "svm-rbf")]
    SvmRbf,
    #[serde(rename = "gmm")]
    Gmm,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::SvmLinear,
        ModelVariant::SvmPoly,
        ModelVariant::SvmRbf,
        ModelVariant::Gmm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::SvmLinear => "svm-linear",
            ModelVariant::SvmPoly => "svm-poly",
            ModelVariant::SvmRbf => "svm-rbf",
            ModelVariant::Gmm => "gmm",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            Error::invalid(format!(
                "unknown model variant {s:?} (expected svm-linear, svm-poly, svm-rbf or gmm)"
            ))
        })
    }
}

/// Classifier choice plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub c: f64,
    pub degree: u32,
    pub alpha: f64,
    pub coef0: f64,
    /// RBF width; `1 / (n_features * variance)` of the training matrix when unset.
    pub gamma: Option<f64>,
    pub components: usize,
    pub gmm_tol: f64,
    pub gmm_max_iter: usize,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            variant: ModelVariant::SvmLinear,
            c: 1.0,
            degree: 3,
            alpha: 1.0,
            coef0: 1.0,
            gamma: None,
            components: 8,
            gmm_tol: 1e-6,
            gmm_max_iter: 200,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn new(variant: ModelVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.variant {
            ModelVariant::Gmm => self.gmm_config().validate(),
            _ => {
                SvmConfig::with_c(self.c).validate()?;
                if let Some(g) = self.gamma {
                    KernelSpec::Rbf { gamma: g }.validate()?;
                }
                KernelSpec::Polynomial {
                    alpha: self.alpha,
                    coef0: self.coef0,
                    degree: self.degree,
                }
                .validate()
            }
        }
    }

    /// Kernel for SVM variants, resolving the default RBF width from `rows`.
    pub fn kernel_for(&self, rows: &[Vec<f64>]) -> Option<KernelSpec> {
        match self.variant {
            ModelVariant::SvmLinear => Some(KernelSpec::Linear),
            ModelVariant::SvmPoly => Some(KernelSpec::Polynomial {
                alpha: self.alpha,
                coef0: self.coef0,
                degree: self.degree,
            }),
            ModelVariant::SvmRbf => Some(KernelSpec::Rbf {
                gamma: self.gamma.unwrap_or_else(|| default_gamma(rows)),
            }),
            ModelVariant::Gmm => None,
        }
    }

    pub fn gmm_config(&self) -> GmmConfig {
        GmmConfig {
            components: self.components,
            tol: self.gmm_tol,
            max_iter: self.gmm_max_iter,
            seed: self.seed,
            ..GmmConfig::default()
        }
    }
}

/// `1 / (d * var)` over every entry of the matrix; `1 / d` for constant data.
pub fn default_gamma(rows: &[Vec<f64>]) -> f64 {
    let d = rows.first().map_or(1, Vec::len).max(1);
    let all: Vec<f64> = rows.iter().flatten().copied().collect();
    let var = crate::stats::std_dev(&all).powi(2);
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0 / d as f64
    }
}

/// Anything that maps a feature vector to a class index.
pub trait Predictor {
    fn predict(&self, x: &[f64]) -> Result<usize>;
}

/// A training procedure over preprocessed rows.
pub trait Learner: Sync {
    type Model: Predictor + Send;

    fn fit(&self, rows: &[Vec<f64>], labels: &[usize], class_names: &[String], exec: Execution) -> Result<Self::Model>;
}

/// A trained classifier of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Classifier {
    Svm(OvaSvmModel),
    Gmm(GmmBank),
}

impl Predictor for Classifier {
    fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            Classifier::Svm(m) => m.predict(x),
            Classifier::Gmm(b) => b.predict(x),
        }
    }
}

impl Learner for ModelSpec {
    type Model = Classifier;

    fn fit(&self, rows: &[Vec<f64>], labels: &[usize], class_names: &[String], exec: Execution) -> Result<Classifier> {
        self.validate()?;
        match self.kernel_for(rows) {
            Some(kernel) => Ok(Classifier::Svm(ova_train_rows(
                rows,
                labels,
                class_names,
                kernel,
                &SvmConfig::with_c(self.c),
                exec,
            )?)),
            None => Ok(Classifier::Gmm(GmmBank::fit(
                rows,
                labels,
                class_names,
                &self.gmm_config(),
                exec,
            )?)),
        }
    }
}

/// Standardization followed by optional PCA, fit on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub standardizer: Standardizer,
    pub pca: Option<PcaModel>,
}

impl Preprocessor {
    pub fn fit(rows: &[Vec<f64>], pca_retained: Option<f64>) -> Result<Self> {
        let standardizer = Standardizer::fit(rows)?;
        let pca = match pca_retained {
            Some(r) => {
                let z = rows
                    .iter()
                    .map(|x| standardizer.transform(x))
                    .collect::<Result<Vec<_>>>()?;
                Some(pca_fit_rows(&z, r)?)
            }
            None => None,
        };
        Ok(Self { standardizer, pca })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardizer.transform(x)?;
        match &self.pca {
            Some(p) => p.transform(&z),
            None => Ok(z),
        }
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|x| self.apply(x)).collect()
    }

    pub fn output_dim(&self) -> usize {
        match &self.pca {
            Some(p) => p.retained_count,
            None => self.standardizer.means.len(),
        }
    }
}

pub const MODEL_FORMAT: &str = "voxid-model";
pub const MODEL_VERSION: u32 = 1;

/// Everything needed to score raw feature vectors, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub spec: ModelSpec,
    pub preprocessor: Preprocessor,
    pub classifier: Classifier,
}

impl TrainedModel {
    pub fn train(data: &Dataset, spec: &ModelSpec, pca_retained: Option<f64>, exec: Execution) -> Result<Self> {
        data.require_trainable()?;
        let preprocessor = Preprocessor::fit(&data.rows, pca_retained)?;
        let rows = preprocessor.apply_all(&data.rows)?;
        let classifier = spec.fit(&rows, &data.labels, &data.class_names, exec)?;
        Ok(Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            feature_names: data.feature_names.clone(),
            class_names: data.class_names.clone(),
            spec: *spec,
            preprocessor,
            classifier,
        })
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<&str> {
        Ok(&self.class_names[self.predict(x)?])
    }

    pub fn predict_all(&self, rows: &[Vec<f64>], exec: Execution) -> Result<Vec<usize>> {
        par::try_map_range(exec, rows.len(), |i| self.predict(&rows[i]))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let model: Self = serde_json::from_reader(file)?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(Error::format(
                "model file",
                format!(
                    "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                    model.format, model.version
                ),
            ));
        }
        Ok(model)
    }
}

impl Predictor for TrainedModel {
    fn predict(&self, x: &[f64]) -> Result<usize> {
        self.classifier.predict(&self.preprocessor.apply(x)?)
    }
}
