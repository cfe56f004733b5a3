//! Filter-style feature ranking.
//!
//! Nine rankers grouped in three families: similarity based (Fisher score,
//! ReliefF, trace ratio), sparse learning (RFS, least-squares and logistic
//! ℓ2,1 regression) and statistical (Gini gain, F-score, t-score). Every
//! ranker produces one score per feature where higher means more useful;
//! [`rank_from_scores`] turns scores into a best-first order.

mod relieff;
mod sparse;
mod trace_ratio;
mod univariate;

pub use relieff::relieff_scores;
pub use sparse::{l21_norm, sparse_l21_rank, SparseLoss, SparseSolution};
pub use trace_ratio::{trace_ratio_scores, TraceRatioResult};
pub use univariate::{fisher_scores, f_scores, gini_scores, t_scores, univariate_scores};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::SubjectId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    Fisher,
    Relieff,
    TraceRatio,
    Rfs,
    LsL21,
    LlL21,
    Gini,
    FScore,
    TScore,
}

impl RankMethod {
    pub const ALL: [RankMethod; 9] = [
        RankMethod::Fisher,
        RankMethod::Relieff,
        RankMethod::TraceRatio,
        RankMethod::Rfs,
        RankMethod::LsL21,
        RankMethod::LlL21,
        RankMethod::Gini,
        RankMethod::FScore,
        RankMethod::TScore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RankMethod::Fisher => "fisher",
            RankMethod::Relieff => "relieff",
            RankMethod::TraceRatio => "trace_ratio",
            RankMethod::Rfs => "rfs",
            RankMethod::LsL21 => "ls_l21",
            RankMethod::LlL21 => "ll_l21",
            RankMethod::Gini => "gini",
            RankMethod::FScore => "f_score",
            RankMethod::TScore => "t_score",
        }
    }
}

impl fmt::Display for RankMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RankMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RankMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ranking method {s:?}")))
    }
}

/// Feature rows with binary labels (1 = PD, 0 = HC) and subject groups.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub groups: Vec<SubjectId>,
}

impl LabeledMatrix {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<u8>, groups: Vec<SubjectId>) -> Result<Self> {
        if x.len() != y.len() || x.len() != groups.len() {
            return Err(Error::invalid(format!(
                "inconsistent row counts: {} rows, {} labels, {} groups",
                x.len(),
                y.len(),
                groups.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::invalid("empty data"));
        }
        let d = x[0].len();
        if let Some(r) = x.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
        if y.iter().any(|&l| l > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        let m = LabeledMatrix { x, y, groups };
        if m.class_counts().iter().any(|&c| c == 0) {
            return Err(Error::invalid("both classes must be present"));
        }
        Ok(m)
    }

    /// Builds a matrix whose group of every row is a placeholder subject.
    pub fn ungrouped(x: Vec<Vec<f64>>, y: Vec<u8>) -> Result<Self> {
        let groups = (0..x.len()).map(|i| SubjectId::new(format!("row{i}")).expect("non-empty")).collect();
        Self::new(x, y, groups)
    }

    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn n_features(&self) -> usize {
        self.x[0].len()
    }

    /// [HC count, PD count]
    pub fn class_counts(&self) -> [usize; 2] {
        let pd = self.y.iter().filter(|&&l| l == 1).count();
        [self.y.len() - pd, pd]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.iter().map(|r| r[j]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub method: RankMethod,
    /// Feature indices, best first.
    pub order: Vec<usize>,
    /// Per-feature score indexed by feature (not by rank).
    pub scores: Vec<f64>,
}

impl FeatureRanking {
    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.scores.len()];
        self.order.len() == self.scores.len()
            && self.order.iter().all(|&i| i < seen.len() && !std::mem::replace(&mut seen[i], true))
    }

    pub fn top(&self, m: usize) -> &[usize] {
        &self.order[..m.min(self.order.len())]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "feature_index", "score", "method"])?;
        for (rank, &f) in self.order.iter().enumerate() {
            w.write_record([
                (rank + 1).to_string(),
                f.to_string(),
                format!("{:e}", self.scores[f]),
                self.method.name().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("ranking csv", e))?;
        Ok(())
    }
}

/// Stable best-first ordering of `scores`, ties broken by ascending index.
pub fn rank_from_scores(method: RankMethod, scores: Vec<f64>, higher_is_better: bool) -> Result<FeatureRanking> {
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score of feature {i} is NaN")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = scores[a].total_cmp(&scores[b]);
        let ord = if higher_is_better { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    Ok(FeatureRanking { method, order, scores })
}

/// Keeps the `m` best-ranked columns of every row, best first.
pub fn select_top_m(ranking: &FeatureRanking, m: usize, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = ranking.order.len();
    if m == 0 || m > d {
        return Err(Error::invalid(format!("m = {m} outside 1..={d}")));
    }
    let cols = ranking.top(m);
    x.iter()
        .map(|row| {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            Ok(cols.iter().map(|&c| row[c]).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerConfig {
    pub relieff_k: usize,
    pub sparse_gamma: f64,
    pub sparse_max_iter: usize,
    pub sparse_tol: f64,
    pub trace_ratio_m: usize,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig { relieff_k: 10, sparse_gamma: 0.1, sparse_max_iter: 200, sparse_tol: 1e-6, trace_ratio_m: 100 }
    }
}

/// Runs one ranker end to end.
pub fn rank_features(data: &LabeledMatrix, method: RankMethod, config: &RankerConfig) -> Result<FeatureRanking> {
    let scores = match method {
        RankMethod::Fisher | RankMethod::FScore | RankMethod::TScore | RankMethod::Gini => {
            univariate_scores(data, method)?
        }
        RankMethod::Relieff => relieff_scores(data, config.relieff_k)?,
        RankMethod::TraceRatio => {
            let m = config.trace_ratio_m.clamp(1, data.n_features());
            trace_ratio_scores(data, m)?.scores
        }
        RankMethod::Rfs | RankMethod::LsL21 | RankMethod::LlL21 => {
            let loss = match method {
                RankMethod::Rfs => SparseLoss::Rfs,
                RankMethod::LsL21 => SparseLoss::LeastSquares,
                _ => SparseLoss::Logistic,
            };
            let sol = sparse_l21_rank(data, loss, config.sparse_gamma, config.sparse_max_iter, config.sparse_tol)?;
            if !sol.converged {
                log::warn!("{method} solver stopped at max_iter={} before reaching tol", config.sparse_max_iter);
            }
            sol.scores
        }
    };
    rank_from_scores(method, scores, true)
}
