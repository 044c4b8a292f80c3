//! Repeated shuffled k-fold cross-validation with per-fold preprocessing.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{Learner, ModelSpec, Predictor, Preprocessor};
use crate::error::{Error, Result};
use crate::features::{format_float, Dataset};
use crate::par::{self, Execution};

/// One train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn check_folds(n: usize, folds: usize) -> Result<()> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::invalid(format!("{folds} folds requested for {n} rows")));
    }
    Ok(())
}

fn folds_from_tests(n: usize, tests: Vec<Vec<usize>>) -> Vec<Fold> {
    tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; n];
            test.iter().for_each(|&i| in_test[i] = true);
            let train = (0..n).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect()
}

/// Seeded shuffle, then contiguous blocks; the first `n % folds` blocks get
/// one extra row.
pub fn kfold_split(n: usize, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    check_folds(n, folds)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut start = 0;
    let tests = (0..folds)
        .map(|f| {
            let size = base + usize::from(f < extra);
            let block = order[start..start + size].to_vec();
            start += size;
            block
        })
        .collect();
    Ok(folds_from_tests(n, tests))
}

/// Shuffles each class separately and deals its rows round-robin, continuing
/// across classes so fold sizes still differ by at most one.
pub fn stratified_kfold_split(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = labels.len();
    check_folds(n, folds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut tests = vec![Vec::new(); folds];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            tests[next].push(i);
            next = (next + 1) % folds;
        }
    }
    Ok(folds_from_tests(n, tests))
}

/// Cross-validation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvPlan {
    pub folds: usize,
    pub repeats: usize,
    /// Repeat `r` shuffles with `seed + r`.
    pub seed: u64,
    #[serde(skip)]
    pub model: ModelSpec,
    /// Retained-variance target for per-fold PCA; `None` skips PCA.
    pub pca_retained: Option<f64>,
    pub stratified: bool,
    /// When false, `train_seconds` is reported as zero so reports are byte-stable.
    pub record_timing: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            folds: 10,
            repeats: 15,
            seed: 0,
            model: ModelSpec::default(),
            pca_retained: Some(0.9999),
            stratified: false,
            record_timing: true,
            execution: Execution::default(),
        }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if let Some(r) = self.pca_retained {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::Config(format!("pca_retained must lie in (0, 1], got {r}")));
            }
        }
        self.model.validate().map_err(|e| Error::Config(e.to_string()))
    }

    fn split(&self, data: &Dataset, repeat: usize) -> Result<Vec<Fold>> {
        let seed = self.seed.wrapping_add(repeat as u64);
        if self.stratified {
            stratified_kfold_split(&data.labels, self.folds, seed)
        } else {
            kfold_split(data.len(), self.folds, seed)
        }
    }
}

/// Aggregated cross-validation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Pooled accuracy of each repeat.
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Population standard deviation of `accuracies`.
    pub std_accuracy: f64,
    pub class_names: Vec<String>,
    /// `confusion[true][predicted]`, summed over all repeats.
    pub confusion: Vec<Vec<usize>>,
    /// Model-fitting seconds per repeat (summed over folds).
    pub train_seconds: Vec<f64>,
}

impl EvalReport {
    pub fn from_parts(
        accuracies: Vec<f64>,
        train_seconds: Vec<f64>,
        class_names: Vec<String>,
        confusion: Vec<Vec<usize>>,
    ) -> Self {
        Self {
            mean_accuracy: crate::stats::mean(&accuracies),
            std_accuracy: crate::stats::std_dev(&accuracies),
            accuracies,
            class_names,
            confusion,
            train_seconds,
        }
    }

    pub fn total_train_seconds(&self) -> f64 {
        self.train_seconds.iter().sum()
    }
}

/// What a fold saw, passed to the audit hook before the model is scored.
pub struct FoldAudit<'a> {
    pub repeat: usize,
    pub fold: usize,
    pub train: &'a [usize],
    pub test: &'a [usize],
    pub preprocessor: &'a Preprocessor,
}

pub fn cross_validate(data: &Dataset, plan: &CvPlan) -> Result<EvalReport> {
    cross_validate_with(data, plan, &plan.model, None)
}

struct FoldResult {
    predictions: Vec<(usize, usize)>,
    seconds: f64,
}

/// Cross-validates any learner. Folds of a repeat run concurrently; repeats
/// run in order.
pub fn cross_validate_with<L: Learner>(
    data: &Dataset,
    plan: &CvPlan,
    learner: &L,
    audit: Option<&(dyn Fn(&FoldAudit<'_>) + Sync)>,
) -> Result<EvalReport> {
    plan.validate()?;
    data.require_trainable()?;
    for (name, count) in data.class_names.iter().zip(data.class_counts()) {
        if count < plan.folds {
            log::warn!(
                "class {name:?} has {count} rows, fewer than {} folds; some folds will lack it",
                plan.folds
            );
        }
    }
    let k = data.n_classes();
    let mut accuracies = Vec::with_capacity(plan.repeats);
    let mut train_seconds = Vec::with_capacity(plan.repeats);
    let mut confusion = vec![vec![0usize; k]; k];

    for repeat in 0..plan.repeats {
        let folds = plan.split(data, repeat)?;
        let results = par::try_map_range(plan.execution, folds.len(), |f| {
            run_fold(data, plan, learner, audit, repeat, f, &folds[f])
        })?;
        let mut correct = 0;
        let mut total = 0;
        let mut seconds = 0.0;
        for r in results {
            seconds += r.seconds;
            for (truth, pred) in r.predictions {
                confusion[truth][pred] += 1;
                correct += usize::from(truth == pred);
                total += 1;
            }
        }
        accuracies.push(correct as f64 / total as f64);
        train_seconds.push(if plan.record_timing { seconds } else { 0.0 });
        log::debug!("repeat {repeat}: accuracy {:.4}", accuracies[repeat]);
    }
    Ok(EvalReport::from_parts(
        accuracies,
        train_seconds,
        data.class_names.clone(),
        confusion,
    ))
}

fn run_fold<L: Learner>(
    data: &Dataset,
    plan: &CvPlan,
    learner: &L,
    audit: Option<&(dyn Fn(&FoldAudit<'_>) + Sync)>,
    repeat: usize,
    fold: usize,
    split: &Fold,
) -> Result<FoldResult> {
    let train_rows: Vec<Vec<f64>> = split.train.iter().map(|&i| data.rows[i].clone()).collect();
    let train_labels: Vec<usize> = split.train.iter().map(|&i| data.labels[i]).collect();

    let started = Instant::now();
    let pre = Preprocessor::fit(&train_rows, plan.pca_retained)?;
    let z = pre.apply_all(&train_rows)?;
    // nested parallelism is left to the fold level
    let model = learner.fit(&z, &train_labels, &data.class_names, Execution::Sequential)?;
    let seconds = started.elapsed().as_secs_f64();

    if let Some(hook) = audit {
        hook(&FoldAudit {
            repeat,
            fold,
            train: &split.train,
            test: &split.test,
            preprocessor: &pre,
        });
    }
    let predictions = split
        .test
        .iter()
        .map(|&i| Ok((data.labels[i], model.predict(&pre.apply(&data.rows[i])?)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldResult { predictions, seconds })
}

/// Path of the confusion-matrix CSV written next to a report.
pub fn confusion_path(report_path: &Path) -> PathBuf {
    let stem = report_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report_path.with_file_name(format!("{stem}.confusion.csv"))
}

/// Writes `repeat,accuracy,train_seconds` rows plus a `<stem>.confusion.csv`
/// sidecar whose first column is the true class.
pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["repeat", "accuracy", "train_seconds"])?;
    for (r, (a, s)) in report.accuracies.iter().zip(&report.train_seconds).enumerate() {
        w.write_record([r.to_string(), format_float(*a), format_float(*s)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(confusion_path(path))?;
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(report.class_names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in report.class_names.iter().zip(&report.confusion) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back a report written by [`emit_report`].
pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let bad = |detail: String| Error::format("report CSV", detail);
    let mut accuracies = Vec::new();
    let mut train_seconds = Vec::new();
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().collect::<Vec<_>>() != ["repeat", "accuracy", "train_seconds"] {
        return Err(bad(format!("unexpected header in {}", path.display())));
    }
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("bad number in row {:?}", rec)))
        };
        accuracies.push(field(1)?);
        train_seconds.push(field(2)?);
    }

    let mut r = csv::Reader::from_path(confusion_path(path))?;
    let class_names: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut confusion = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<usize>().map_err(|_| bad(format!("bad count {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != class_names.len() {
            return Err(bad("confusion row width does not match the header".into()));
        }
        confusion.push(row);
    }
    Ok(EvalReport::from_parts(
        accuracies,
        train_seconds,
        class_names,
        confusion,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ModelVariant;
    use rand_distr::{Distribution, Normal};
    use std::sync::Mutex;

    pub(crate) fn blobs(per_class: usize, sep: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for k in 0..4 {
            let centre = [sep * (k % 2) as f64, sep * (k / 2) as f64, 0.0];
            for _ in 0..per_class {
                rows.push(centre.iter().map(|c| c + noise.sample(&mut rng)).collect());
                labels.push(format!("s{k}"));
            }
        }
        Dataset::new(vec!["x".into(), "y".into(), "z".into()], rows, labels).unwrap()
    }

    struct AlwaysZero;
    struct Zero;

    impl Predictor for Zero {
        fn predict(&self, _: &[f64]) -> Result<usize> {
            Ok(0)
        }
    }

    impl Learner for AlwaysZero {
        type Model = Zero;
        fn fit(&self, _: &[Vec<f64>], _: &[usize], _: &[String], _: Execution) -> Result<Zero> {
            Ok(Zero)
        }
    }

    fn assert_partition(folds: &[Fold], n: usize) {
        let mut seen = vec![0; n];
        for f in folds {
            for &i in &f.test {
                seen[i] += 1;
            }
            assert_eq!(f.train.len() + f.test.len(), n);
            assert!(f.train.iter().all(|i| !f.test.contains(i)));
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn fold_sizes() {
        let f = kfold_split(100, 10, 1).unwrap();
        assert!(f.iter().all(|f| f.test.len() == 10));
        assert_partition(&f, 100);
        let f = kfold_split(103, 10, 1).unwrap();
        let sizes: Vec<usize> = f.iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 11).count(), 3);
        assert_eq!(sizes.iter().filter(|&&s| s == 10).count(), 7);
        assert_partition(&f, 103);
        assert!(kfold_split(5, 10, 0).is_err());
        assert!(kfold_split(5, 1, 0).is_err());
    }

    #[test]
    fn seed_changes_membership_not_sizes() {
        let a = kfold_split(57, 10, 1).unwrap();
        let b = kfold_split(57, 10, 2).unwrap();
        assert_ne!(a, b);
        let sizes = |f: &[Fold]| f.iter().map(|f| f.test.len()).collect::<Vec<_>>();
        assert_eq!(sizes(&a), sizes(&b));
        assert_eq!(a, kfold_split(57, 10, 1).unwrap());
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let folds = stratified_kfold_split(&labels, 10, 3).unwrap();
        assert_partition(&folds, 40);
        for f in &folds {
            let mut counts = [0; 4];
            f.test.iter().for_each(|&i| counts[labels[i]] += 1);
            assert_eq!(counts, [1, 1, 1, 1]);
        }
    }

    #[test]
    fn constant_predictor_scores_chance() {
        let data = blobs(10, 10.0, 1);
        let plan = CvPlan {
            repeats: 3,
            ..CvPlan::default()
        };
        let rep = cross_validate_with(&data, &plan, &AlwaysZero, None).unwrap();
        assert_eq!(rep.accuracies, vec![0.25; 3]);
        assert_eq!(rep.std_accuracy, 0.0);
        for (i, row) in rep.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), 30);
            assert_eq!(row[0], 30, "class {i}");
        }
    }

    #[test]
    fn separable_blobs_are_classified() {
        let data = blobs(25, 10.0, 2);
        let plan = CvPlan {
            repeats: 2,
            record_timing: false,
            ..CvPlan::default()
        };
        let rep = cross_validate(&data, &plan).unwrap();
        assert!(rep.mean_accuracy >= 0.99, "{}", rep.mean_accuracy);
        assert_eq!(rep, cross_validate(&data, &plan).unwrap());
        let seq = CvPlan {
            execution: Execution::Sequential,
            ..plan
        };
        assert_eq!(rep, cross_validate(&data, &seq).unwrap());
        assert!(rep.accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn preprocessing_never_sees_test_rows() {
        let data = blobs(12, 4.0, 3);
        let plan = CvPlan {
            repeats: 2,
            folds: 4,
            model: ModelSpec::new(ModelVariant::SvmRbf),
            ..CvPlan::default()
        };
        let checked = Mutex::new(0);
        let hook = |a: &FoldAudit<'_>| {
            let d = data.dim();
            for j in 0..d {
                let mean = a.train.iter().map(|&i| data.rows[i][j]).sum::<f64>() / a.train.len() as f64;
                assert!((a.preprocessor.standardizer.means[j] - mean).abs() < 1e-12);
            }
            let z: Vec<Vec<f64>> = a
                .train
                .iter()
                .map(|&i| a.preprocessor.standardizer.transform(&data.rows[i]).unwrap())
                .collect();
            let pca = crate::features::pca_fit_rows(&z, 0.9999).unwrap();
            assert_eq!(Some(&pca), a.preprocessor.pca.as_ref());
            *checked.lock().unwrap() += 1;
        };
        cross_validate_with(&data, &plan, &plan.model, Some(&hook)).unwrap();
        assert_eq!(*checked.lock().unwrap(), 8);
    }

    #[test]
    fn single_class_is_rejected() {
        let data = Dataset::new(
            vec!["x".into()],
            vec![vec![1.0], vec![2.0]],
            vec!["a".into(), "a".into()],
        )
        .unwrap();
        let plan = CvPlan {
            folds: 2,
            ..CvPlan::default()
        };
        assert!(matches!(cross_validate(&data, &plan), Err(Error::DegenerateData(_))));
        let bad = CvPlan {
            folds: 1,
            ..CvPlan::default()
        };
        assert!(bad.validate().unwrap_err().is_usage());
    }

    #[test]
    fn report_roundtrips_through_csv() {
        let data = blobs(10, 3.0, 4);
        let plan = CvPlan {
            repeats: 15,
            folds: 5,
            ..CvPlan::default()
        };
        let rep = cross_validate(&data, &plan).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("acc.csv");
        emit_report(&rep, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 16);
        assert!(dir.path().join("acc.confusion.csv").exists());
        assert_eq!(read_report(&path).unwrap(), rep);
    }
}
