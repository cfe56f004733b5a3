use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{loso_folds, Fold};
use super::metrics::{aggregate_segment, confusion_from_predictions, roc_auc, Classification, RocPoint, DEFAULT_TRIM};
use crate::classical::{
    default_grid, grid_search, train_classifier, ClassifierFamily, ClassifierSpec, Gamma, KernelSpec, SvmParams,
    DEFAULT_INNER_FOLDS,
};
use crate::corpus::{load_manifest, load_segments, CorpusManifest, SubjectId, Task};
use crate::deepnet::{cnn_train, predict_sample_probs, window_samples, SampleWindow, TrainConfig, WindowScaler};
use crate::dsp::{DspConfig, MfccExtractor, MfccMatrix};
use crate::error::{Error, Result, StageExt};
use crate::features::{build_feature_vector, Standardizer, N_FEATURES};
use crate::selection::{rank_features, select_top_m, FeatureRanking, LabeledMatrix, RankMethod, RankerConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Classical,
    Cnn,
    Both,
}

impl Branch {
    pub fn classical(self) -> bool {
        matches!(self, Branch::Classical | Branch::Both)
    }

    pub fn cnn(self) -> bool {
        matches!(self, Branch::Cnn | Branch::Both)
    }
}

/// Feature ranking, subset size and classifier for the classical branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalConfig {
    pub ranking: RankMethod,
    pub m: usize,
    /// Subset sizes evaluated by the sweep.
    pub sweep_m: Vec<usize>,
    /// Used as is unless `grid` is set.
    pub classifier: ClassifierSpec,
    /// Tune over this family's default grid inside each training fold.
    pub grid: Option<ClassifierFamily>,
    pub inner_folds: usize,
    pub ranker: RankerConfig,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        ClassicalConfig {
            ranking: RankMethod::LsL21,
            m: 100,
            sweep_m: vec![10, 20, 50, 100, 200, 480],
            classifier: ClassifierSpec::Svm(SvmParams::new(KernelSpec::rbf(Gamma::Scale), 4.0)),
            grid: None,
            inner_folds: DEFAULT_INNER_FOLDS,
            ranker: RankerConfig::default(),
        }
    }
}

/// Everything a run depends on. `seed` drives every stochastic stage; the
/// per-fold CNN and forest seeds are derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    /// Task code 1, 2 or 3; all tasks when absent.
    pub task: Option<u8>,
    pub branch: Branch,
    pub classical: ClassicalConfig,
    pub cnn: TrainConfig,
    /// Standardize each MFCC row of the CNN input with statistics from the
    /// training fold's windows.
    pub standardize_cnn_input: bool,
    pub dsp: DspConfig,
    pub trim: f64,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            manifest: PathBuf::from("manifest.csv"),
            task: None,
            branch: Branch::Classical,
            classical: ClassicalConfig::default(),
            cnn: TrainConfig::default(),
            standardize_cnn_input: true,
            dsp: DspConfig::default(),
            trim: DEFAULT_TRIM,
            seed: 0,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.dsp.validate()?;
        self.cnn.validate()?;
        if let Some(t) = self.task {
            Task::from_code(t).ok_or_else(|| Error::Config(format!("task must be 1, 2 or 3, got {t}")))?;
        }
        let c = &self.classical;
        for &m in std::iter::once(&c.m).chain(&c.sweep_m) {
            if m == 0 || m > N_FEATURES {
                return Err(Error::Config(format!("m = {m} outside 1..={N_FEATURES}")));
            }
        }
        if c.inner_folds < 2 {
            return Err(Error::Config("inner_folds must be >= 2".into()));
        }
        if let ClassifierSpec::Svm(p) = c.classifier {
            p.kernel.validate()?;
        }
        if !(0.0..=0.5).contains(&self.trim) {
            return Err(Error::Config(format!("trim must be in [0, 0.5], got {}", self.trim)));
        }
        Ok(())
    }

    pub fn task_filter(&self) -> Option<Task> {
        self.task.and_then(Task::from_code)
    }
}

/// Decoded corpus reduced to what the branches need.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub subjects: Vec<SubjectId>,
    pub labels: Vec<u8>,
    pub tasks: Vec<Task>,
    pub mfcc: Vec<MfccMatrix>,
}

/// Decodes, resamples and extracts MFCCs for every manifest entry that
/// passes the task filter.
pub fn prepare_corpus(manifest: &CorpusManifest, dsp: &DspConfig, task: Option<Task>) -> Result<PreparedCorpus> {
    let mut filtered = manifest.clone();
    if let Some(t) = task {
        filtered.entries.retain(|e| e.task == t);
    }
    if filtered.entries.is_empty() {
        return Err(Error::invalid("no manifest entries left after the task filter")).stage("ingest");
    }
    let segments = load_segments(&filtered, dsp.sample_rate).stage("ingest")?;
    let extractor = MfccExtractor::new(dsp.clone()).stage("mfcc")?;
    let mfcc = segments.par_iter().map(|s| extractor.mfcc(&s.samples)).collect::<Result<Vec<_>>>().stage("mfcc")?;
    Ok(PreparedCorpus {
        subjects: segments.iter().map(|s| s.subject.clone()).collect(),
        labels: segments.iter().map(|s| s.group.label()).collect(),
        tasks: segments.iter().map(|s| s.task).collect(),
        mfcc,
    })
}

/// Raw (unstandardized) feature vectors with their labels and owners.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub subjects: Vec<SubjectId>,
    pub tasks: Vec<Task>,
}

impl FeatureTable {
    pub fn from_corpus(corpus: &PreparedCorpus) -> Self {
        FeatureTable {
            x: corpus.mfcc.par_iter().map(|m| build_feature_vector(m).into_inner()).collect(),
            y: corpus.labels.clone(),
            subjects: corpus.subjects.clone(),
            tasks: corpus.tasks.clone(),
        }
    }

    fn rows(&self, idx: &[usize]) -> Vec<Vec<f64>> {
        idx.iter().map(|&i| self.x[i].clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub segment: usize,
    pub subject: SubjectId,
    pub task: u8,
    pub label: u8,
    /// SVM decision value, vote fraction, or aggregated CNN probability.
    pub score: f64,
    pub predicted: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_segments: usize,
    pub classification: Classification,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub roc: Vec<RocPoint>,
}

pub fn metrics_for(predictions: &[SegmentPrediction]) -> Result<Metrics> {
    let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    let predicted: Vec<u8> = predictions.iter().map(|p| p.predicted).collect();
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let classification = confusion_from_predictions(&predicted, &labels)?;
    let (auc, roc) = if labels.contains(&0) && labels.contains(&1) {
        let (a, r) = roc_auc(&scores, &labels)?;
        (Some(a), r)
    } else {
        (None, Vec::new())
    };
    Ok(Metrics { n_segments: predictions.len(), classification, auc, roc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: u8,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub test_subject: SubjectId,
    pub n_train: usize,
    pub n_test: usize,
    /// Classifier actually used (after any grid search).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classifier: Option<ClassifierSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub metrics: Metrics,
    pub per_task: Vec<TaskMetrics>,
    pub folds: Vec<FoldSummary>,
    /// Segments with no prediction (too short for one CNN window).
    pub skipped_segments: Vec<usize>,
    pub predictions: Vec<SegmentPrediction>,
}

fn branch_report(predictions: Vec<SegmentPrediction>, folds: Vec<FoldSummary>, skipped: Vec<usize>) -> Result<BranchReport> {
    let metrics = metrics_for(&predictions)?;
    let mut per_task = Vec::new();
    for t in Task::ALL {
        let subset: Vec<SegmentPrediction> = predictions.iter().filter(|p| p.task == t.code()).cloned().collect();
        if !subset.is_empty() {
            per_task.push(TaskMetrics { task: t.code(), metrics: metrics_for(&subset)? });
        }
    }
    Ok(BranchReport { metrics, per_task, folds, skipped_segments: skipped, predictions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub m: usize,
    pub auc: Option<f64>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub method: RankMethod,
    pub points: Vec<SweepPoint>,
    /// Smallest m reaching the highest AUC.
    pub best_m: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: PipelineConfig,
    pub n_segments: usize,
    pub n_subjects: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical: Option<BranchReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cnn: Option<BranchReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepCurve>,
    /// Wall-clock creation time in seconds since the Unix epoch; the only
    /// field that differs between identical runs.
    pub generated_at_unix: u64,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Mixes the run seed with a fold index.
fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn with_seed(spec: ClassifierSpec, seed: u64) -> ClassifierSpec {
    match spec {
        ClassifierSpec::Forest(mut f) => {
            f.seed = seed;
            ClassifierSpec::Forest(f)
        }
        other => other,
    }
}

/// Training-fold standardization and ranking, shared by every subset size.
struct PreparedFold {
    fold: Fold,
    train_x: Vec<Vec<f64>>,
    test_x: Vec<Vec<f64>>,
    ranking: FeatureRanking,
}

fn prepare_fold(table: &FeatureTable, fold: Fold, cfg: &ClassicalConfig) -> Result<PreparedFold> {
    let standardizer = Standardizer::fit(&table.rows(&fold.train))?;
    let train_x = standardizer.transform(&table.rows(&fold.train));
    let test_x = standardizer.transform(&table.rows(&fold.test));
    let data = LabeledMatrix::new(
        train_x.clone(),
        fold.train.iter().map(|&i| table.y[i]).collect(),
        fold.train.iter().map(|&i| table.subjects[i].clone()).collect(),
    )?;
    let ranking = rank_features(&data, cfg.ranking, &cfg.ranker)?;
    Ok(PreparedFold { fold, train_x, test_x, ranking })
}

fn fit_predict(
    table: &FeatureTable,
    pf: &PreparedFold,
    m: usize,
    cfg: &ClassicalConfig,
    seed: u64,
) -> Result<(Vec<SegmentPrediction>, ClassifierSpec)> {
    let train = select_top_m(&pf.ranking, m, &pf.train_x)?;
    let test = select_top_m(&pf.ranking, m, &pf.test_x)?;
    let ty: Vec<u8> = pf.fold.train.iter().map(|&i| table.y[i]).collect();
    let spec = match cfg.grid {
        Some(family) => {
            let groups: Vec<SubjectId> = pf.fold.train.iter().map(|&i| table.subjects[i].clone()).collect();
            grid_search(&train, &ty, &groups, &default_grid(family), cfg.inner_folds)?.best
        }
        None => cfg.classifier,
    };
    let spec = with_seed(spec, seed).clamped(train.len());
    let model = train_classifier(&spec, &train, &ty)?;
    let predictions = pf
        .fold
        .test
        .iter()
        .zip(&test)
        .map(|(&i, row)| {
            let (predicted, score) = model.predict(row)?;
            Ok(SegmentPrediction {
                segment: i,
                subject: table.subjects[i].clone(),
                task: table.tasks[i].code(),
                label: table.y[i],
                score,
                predicted,
            })
        })
        .collect::<Result<_>>()?;
    Ok((predictions, spec))
}

fn prepared_folds(table: &FeatureTable, cfg: &ClassicalConfig) -> Result<Vec<PreparedFold>> {
    loso_folds(&table.subjects)?.into_par_iter().map(|f| prepare_fold(table, f, cfg)).collect()
}

/// Leave-one-subject-out evaluation of the classical branch. Standardization
/// and ranking are refitted on each training fold.
pub fn classical_loso(table: &FeatureTable, cfg: &ClassicalConfig, seed: u64) -> Result<BranchReport> {
    let folds = prepared_folds(table, cfg).stage("rank")?;
    let results: Vec<(Vec<SegmentPrediction>, ClassifierSpec)> = folds
        .par_iter()
        .enumerate()
        .map(|(k, pf)| fit_predict(table, pf, cfg.m, cfg, fold_seed(seed, k)))
        .collect::<Result<_>>()
        .stage("classify")?;
    let summaries = folds
        .iter()
        .zip(&results)
        .map(|(pf, (_, spec))| FoldSummary {
            test_subject: pf.fold.test_subject.clone(),
            n_train: pf.fold.train.len(),
            n_test: pf.fold.test.len(),
            classifier: Some(*spec),
            best_epoch: None,
            val_accuracy: None,
            epochs_run: None,
            restarts: None,
        })
        .collect();
    let mut predictions: Vec<SegmentPrediction> = results.into_iter().flat_map(|(p, _)| p).collect();
    predictions.sort_by_key(|p| p.segment);
    branch_report(predictions, summaries, Vec::new()).stage("metrics")
}

/// LOSO AUC and accuracy for each subset size, reusing each fold's ranking.
pub fn auc_vs_m_sweep(table: &FeatureTable, cfg: &ClassicalConfig, m_values: &[usize], seed: u64) -> Result<SweepCurve> {
    if m_values.is_empty() {
        return Err(Error::Config("sweep needs at least one m value".into()));
    }
    let folds = prepared_folds(table, cfg).stage("rank")?;
    let jobs: Vec<(usize, usize)> = (0..m_values.len()).flat_map(|mi| (0..folds.len()).map(move |k| (mi, k))).collect();
    let results: Vec<Vec<SegmentPrediction>> = jobs
        .par_iter()
        .map(|&(mi, k)| Ok(fit_predict(table, &folds[k], m_values[mi], cfg, fold_seed(seed, k))?.0))
        .collect::<Result<_>>()
        .stage("classify")?;
    let mut points = Vec::with_capacity(m_values.len());
    for (mi, &m) in m_values.iter().enumerate() {
        let preds: Vec<SegmentPrediction> =
            results[mi * folds.len()..(mi + 1) * folds.len()].iter().flatten().cloned().collect();
        let metrics = metrics_for(&preds).stage("metrics")?;
        points.push(SweepPoint { m, auc: metrics.auc, accuracy: metrics.classification.accuracy });
    }
    let mut best: Option<(usize, f64)> = None;
    for p in &points {
        if let Some(a) = p.auc {
            let better = match best {
                None => true,
                Some((bm, ba)) => a > ba || (a == ba && p.m < bm),
            };
            if better {
                best = Some((p.m, a));
            }
        }
    }
    Ok(SweepCurve { method: cfg.ranking, points, best_m: best.map(|(m, _)| m) })
}

/// LOSO training of the CNN on 40×40 windows; each held-out segment is
/// scored by the trimmed mean of its window probabilities.
pub fn cnn_loso(corpus: &PreparedCorpus, train: &TrainConfig, standardize: bool, trim: f64, seed: u64) -> Result<BranchReport> {
    let windows: Vec<Vec<SampleWindow>> =
        corpus.mfcc.iter().enumerate().map(|(i, m)| window_samples(m, i)).collect();
    let skipped: Vec<usize> = (0..windows.len()).filter(|&i| windows[i].is_empty()).collect();
    if !skipped.is_empty() {
        log::warn!("{} segments are shorter than one window and get no CNN score", skipped.len());
    }
    let folds = loso_folds(&corpus.subjects).stage("cnn")?;
    let results: Vec<(Vec<SegmentPrediction>, FoldSummary)> = folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| {
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for &i in &fold.train {
                xs.extend(windows[i].iter().cloned());
                ys.extend(std::iter::repeat_n(corpus.labels[i], windows[i].len()));
            }
            let scaler = if standardize { Some(WindowScaler::fit(&xs)?) } else { None };
            if let Some(sc) = &scaler {
                xs = xs.iter().map(|w| sc.apply(w)).collect();
            }
            let config = TrainConfig { seed: fold_seed(seed, k), ..*train };
            let outcome = cnn_train(&xs, &ys, &config)?;
            log::info!(
                "cnn fold {}: best epoch {} val acc {:.3}",
                fold.test_subject,
                outcome.best_epoch,
                outcome.best_val_accuracy
            );
            let mut preds = Vec::new();
            for &i in fold.test.iter().filter(|&&i| !windows[i].is_empty()) {
                let test: Vec<SampleWindow> = match &scaler {
                    Some(sc) => windows[i].iter().map(|w| sc.apply(w)).collect(),
                    None => windows[i].clone(),
                };
                let probs = predict_sample_probs(&outcome.params, &test)?;
                let score = aggregate_segment(&probs, trim)?;
                preds.push(SegmentPrediction {
                    segment: i,
                    subject: corpus.subjects[i].clone(),
                    task: corpus.tasks[i].code(),
                    label: corpus.labels[i],
                    score,
                    predicted: u8::from(score > 0.5),
                });
            }
            let summary = FoldSummary {
                test_subject: fold.test_subject.clone(),
                n_train: fold.train.len(),
                n_test: fold.test.len(),
                classifier: None,
                best_epoch: Some(outcome.best_epoch),
                val_accuracy: Some(outcome.best_val_accuracy),
                epochs_run: Some(outcome.history.len()),
                restarts: Some(outcome.restarts),
            };
            Ok((preds, summary))
        })
        .collect::<Result<_>>()
        .stage("cnn")?;
    let (nested, summaries): (Vec<Vec<SegmentPrediction>>, Vec<FoldSummary>) = results.into_iter().unzip();
    let mut predictions: Vec<SegmentPrediction> = nested.into_iter().flatten().collect();
    predictions.sort_by_key(|p| p.segment);
    branch_report(predictions, summaries, skipped).stage("metrics")
}

/// Runs the configured branches on an already prepared corpus.
pub fn evaluate_corpus(corpus: &PreparedCorpus, config: &PipelineConfig) -> Result<EvaluationReport> {
    config.validate().stage("config")?;
    let classical = if config.branch.classical() {
        let table = FeatureTable::from_corpus(corpus);
        Some(classical_loso(&table, &config.classical, config.seed)?)
    } else {
        None
    };
    let cnn =
        if config.branch.cnn() { Some(cnn_loso(corpus, &config.cnn, config.standardize_cnn_input, config.trim, config.seed)?) } else { None };
    let mut distinct = corpus.subjects.clone();
    distinct.sort();
    distinct.dedup();
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: config.seed,
        config: config.clone(),
        n_segments: corpus.labels.len(),
        n_subjects: distinct.len(),
        classical,
        cnn,
        sweep: None,
        generated_at_unix: now_unix(),
    })
}

/// ingest → MFCC → branches → metrics.
pub fn run_pipeline(config: &PipelineConfig) -> Result<EvaluationReport> {
    config.validate().stage("config")?;
    let manifest = load_manifest(&config.manifest).stage("ingest")?;
    let corpus = prepare_corpus(&manifest, &config.dsp, config.task_filter())?;
    evaluate_corpus(&corpus, config)
}

/// ingest → MFCC → features → per-m LOSO. The report carries only the sweep.
pub fn run_sweep(config: &PipelineConfig) -> Result<EvaluationReport> {
    config.validate().stage("config")?;
    let manifest = load_manifest(&config.manifest).stage("ingest")?;
    let corpus = prepare_corpus(&manifest, &config.dsp, config.task_filter())?;
    let table = FeatureTable::from_corpus(&corpus);
    let sweep = auc_vs_m_sweep(&table, &config.classical, &config.classical.sweep_m, config.seed)?;
    let mut distinct = corpus.subjects.clone();
    distinct.sort();
    distinct.dedup();
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: config.seed,
        config: config.clone(),
        n_segments: corpus.labels.len(),
        n_subjects: distinct.len(),
        classical: None,
        cnn: None,
        sweep: Some(sweep),
        generated_at_unix: now_unix(),
    })
}
