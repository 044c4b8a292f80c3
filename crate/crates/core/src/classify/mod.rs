//! SVM (one-against-all, SMO) and per-class Gaussian mixture classifiers.

mod gmm;
mod kernel;
mod kmeans;
mod model;
mod svm;

pub use gmm::{gmm_bank_predict, gmm_fit, gmm_fit_with, gmm_log_likelihood, GmmBank, GmmConfig, GmmFit, GmmModel};
pub use kernel::{kernel_eval, GramMatrix, KernelSpec};
pub use kmeans::kmeans;
pub use model::{
    default_gamma, Classifier, Learner, ModelSpec, ModelVariant, Predictor, Preprocessor, TrainedModel, MODEL_FORMAT,
    MODEL_VERSION,
};
pub use svm::{
    argmax, ova_predict, ova_train, ova_train_rows, svm_decision, svm_train_binary, svm_train_binary_with,
    BinarySvmModel, OvaSvmModel, SvmConfig,
};
