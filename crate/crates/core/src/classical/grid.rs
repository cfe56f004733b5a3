use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{Gamma, KernelSpec};
use super::svm::SvmParams;
use super::{train_classifier, ClassifierSpec, ForestConfig};
use crate::corpus::SubjectId;
use crate::error::{Error, Result};

pub const DEFAULT_INNER_FOLDS: usize = 5;
pub const DEFAULT_C_GRID: [f64; 7] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
pub const DEFAULT_GAMMA_GRID: [Gamma; 5] =
    [Gamma::Scale, Gamma::Value(1e-4), Gamma::Value(1e-3), Gamma::Value(1e-2), Gamma::Value(1e-1)];
pub const DEFAULT_POLY_DEGREES: [u32; 2] = [2, 3];
pub const DEFAULT_K_GRID: [usize; 8] = [1, 3, 5, 7, 9, 11, 13, 15];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierFamily {
    SvmLinear,
    SvmPoly,
    SvmRbf,
    Knn,
    Forest,
}

/// Default candidates, in the order ties are resolved.
pub fn default_grid(family: ClassifierFamily) -> Vec<ClassifierSpec> {
    let svm = |kernel| DEFAULT_C_GRID.iter().map(move |&c| ClassifierSpec::Svm(SvmParams::new(kernel, c)));
    match family {
        ClassifierFamily::SvmLinear => svm(KernelSpec::linear()).collect(),
        ClassifierFamily::SvmRbf => DEFAULT_GAMMA_GRID.iter().flat_map(|&g| svm(KernelSpec::rbf(g))).collect(),
        ClassifierFamily::SvmPoly => DEFAULT_POLY_DEGREES
            .iter()
            .flat_map(|&deg| DEFAULT_GAMMA_GRID.iter().map(move |&g| (deg, g)))
            .flat_map(|(deg, g)| svm(KernelSpec::polynomial(deg, g)))
            .collect(),
        ClassifierFamily::Knn => DEFAULT_K_GRID.iter().map(|&k| ClassifierSpec::Knn { k }).collect(),
        ClassifierFamily::Forest => vec![ClassifierSpec::Forest(ForestConfig::default())],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: ClassifierSpec,
    pub best_index: usize,
    /// Mean inner-fold accuracy per candidate.
    pub mean_accuracy: Vec<f64>,
    pub n_folds: usize,
}

/// Fold index per row: distinct groups sorted, then dealt round-robin.
pub fn group_folds(groups: &[SubjectId], n_folds: usize) -> (Vec<usize>, usize) {
    let order: BTreeMap<&SubjectId, usize> = {
        let mut m = BTreeMap::new();
        for g in groups {
            m.insert(g, 0);
        }
        m.into_keys().enumerate().map(|(i, g)| (g, i)).collect()
    };
    let k = n_folds.min(order.len()).max(1);
    (groups.iter().map(|g| order[g] % k).collect(), k)
}

/// Subject-grouped k-fold search; the first candidate with the highest mean
/// accuracy wins.
pub fn grid_search(
    x: &[Vec<f64>],
    y: &[u8],
    groups: &[SubjectId],
    candidates: &[ClassifierSpec],
    n_folds: usize,
) -> Result<GridResult> {
    if candidates.is_empty() {
        return Err(Error::Config("grid search needs at least one candidate".into()));
    }
    if x.len() != y.len() || x.len() != groups.len() {
        return Err(Error::invalid("grid search rows, labels and groups differ in length"));
    }
    let (fold_of, k) = group_folds(groups, n_folds);
    if k < 2 {
        return Err(Error::invalid("grid search needs at least two distinct groups"));
    }
    let mean_accuracy = candidates
        .par_iter()
        .map(|spec| {
            let mut total = 0.0;
            for f in 0..k {
                let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for i in 0..x.len() {
                    if fold_of[i] == f {
                        vx.push(x[i].clone());
                        vy.push(y[i]);
                    } else {
                        tx.push(x[i].clone());
                        ty.push(y[i]);
                    }
                }
                let correct = if ty.contains(&0) && ty.contains(&1) {
                    let spec = spec.clamped(tx.len());
                    let model = train_classifier(&spec, &tx, &ty)?;
                    let mut c = 0;
                    for (r, l) in vx.iter().zip(&vy) {
                        c += usize::from(model.predict(r)?.0 == *l);
                    }
                    c
                } else {
                    // one-class training split: the only sensible prediction is that class
                    vy.iter().filter(|&&l| l == ty[0]).count()
                };
                total += correct as f64 / vy.len() as f64;
            }
            Ok(total / k as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best_index = 0;
    for (i, a) in mean_accuracy.iter().enumerate() {
        if *a > mean_accuracy[best_index] {
            best_index = i;
        }
    }
    Ok(GridResult { best: candidates[best_index], best_index, mean_accuracy, n_folds: k })
}
