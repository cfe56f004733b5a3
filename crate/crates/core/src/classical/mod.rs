//! Classical classifiers over feature vectors: SVM, kNN and random forest.

mod forest;
mod grid;
mod kernel;
mod knn;
mod svm;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{train_random_forest, ForestConfig, ForestModel, Node, Tree};
pub use grid::{
    default_grid, grid_search, group_folds, ClassifierFamily, GridResult, DEFAULT_C_GRID, DEFAULT_GAMMA_GRID,
    DEFAULT_INNER_FOLDS, DEFAULT_K_GRID, DEFAULT_POLY_DEGREES,
};
pub use kernel::{scale_gamma, Gamma, KernelKind, KernelSpec, ResolvedKernel};
pub use knn::{knn_predict, KnnPrediction};
pub use svm::{dual_objective, fit_svm, train_svm, SvmFit, SvmModel, SvmParams, DEFAULT_KKT_TOL};

use crate::error::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// A classifier and its hyperparameters, before training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Svm(SvmParams),
    Knn { k: usize },
    Forest(ForestConfig),
}

impl ClassifierSpec {
    /// kNN with `k` above the training size falls back to `k = n`.
    pub fn clamped(self, n_train: usize) -> Self {
        match self {
            ClassifierSpec::Knn { k } => ClassifierSpec::Knn { k: k.min(n_train).max(1) },
            other => other,
        }
    }

    /// Score above which a row is called PD.
    pub fn threshold(&self) -> f64 {
        match self {
            ClassifierSpec::Svm(_) => 0.0,
            _ => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrainedClassifier {
    Svm(SvmModel),
    Knn { x: Vec<Vec<f64>>, y: Vec<u8>, k: usize },
    Forest(ForestModel),
}

impl TrainedClassifier {
    /// Predicted label and ranking score (SVM decision value, kNN or forest
    /// PD vote fraction).
    pub fn predict(&self, x: &[f64]) -> Result<(u8, f64)> {
        match self {
            TrainedClassifier::Svm(m) => {
                let s = m.decision(x)?;
                Ok((u8::from(s > 0.0), s))
            }
            TrainedClassifier::Knn { x: tx, y, k } => {
                let p = knn_predict(tx, y, x, *k)?;
                Ok((p.label, p.score))
            }
            TrainedClassifier::Forest(m) => m.predict(x),
        }
    }
}

pub fn train_classifier(spec: &ClassifierSpec, x: &[Vec<f64>], y: &[u8]) -> Result<TrainedClassifier> {
    match spec {
        ClassifierSpec::Svm(p) => Ok(TrainedClassifier::Svm(train_svm(x, y, p)?)),
        ClassifierSpec::Knn { k } => {
            if x.is_empty() || x.len() != y.len() {
                return Err(Error::invalid("kNN needs matching, non-empty rows and labels"));
            }
            if *k == 0 || *k > x.len() {
                return Err(Error::Config(format!("kNN k = {k} outside 1..={}", x.len())));
            }
            Ok(TrainedClassifier::Knn { x: x.to_vec(), y: y.to_vec(), k: *k })
        }
        ClassifierSpec::Forest(c) => Ok(TrainedClassifier::Forest(train_random_forest(x, y, c)?)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub model: TrainedClassifier,
}

pub fn save_model(model: &TrainedClassifier, path: &Path) -> Result<()> {
    let doc = ModelDocument { schema_version: MODEL_SCHEMA_VERSION, model: model.clone() };
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedClassifier> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ModelDocument = serde_json::from_str(&text)?;
    if doc.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "model schema version {} not supported (expected {MODEL_SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    Ok(doc.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_json_round_trip() {
        let x = vec![vec![-1.0, 0.5], vec![1.0, 0.2], vec![-0.8, -0.1], vec![0.9, 0.0]];
        let y = [0, 1, 0, 1];
        let dir = tempfile::tempdir().unwrap();
        for spec in [
            ClassifierSpec::Svm(SvmParams::new(KernelSpec::rbf(Gamma::Scale), 4.0)),
            ClassifierSpec::Knn { k: 3 },
            ClassifierSpec::Forest(ForestConfig { n_trees: 3, ..Default::default() }),
        ] {
            let m = train_classifier(&spec, &x, &y).unwrap();
            let path = dir.path().join("model.json");
            save_model(&m, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(m, back);
            assert_eq!(m.predict(&[0.3, 0.3]).unwrap(), back.predict(&[0.3, 0.3]).unwrap());
        }
    }

    #[test]
    fn spec_json_shape() {
        let spec: ClassifierSpec =
            serde_json::from_str(r#"{"type":"svm","kernel":{"kind":"rbf","gamma":"scale"},"c":4.0}"#).unwrap();
        assert_eq!(spec, ClassifierSpec::Svm(SvmParams::new(KernelSpec::rbf(Gamma::Scale), 4.0)));
        let spec: ClassifierSpec = serde_json::from_str(r#"{"type":"knn","k":5}"#).unwrap();
        assert_eq!(spec, ClassifierSpec::Knn { k: 5 });
    }
}
