use super::{LabeledMatrix, RankMethod};
use crate::error::{Error, Result};

const DENOM_FLOOR: f64 = 1e-12;

struct ClassStats {
    n: [f64; 2],
    mean: [f64; 2],
    /// population variance per class
    pop_var: [f64; 2],
    overall_mean: f64,
}

impl ClassStats {
    fn sample_var(&self, c: usize) -> f64 {
        self.pop_var[c] * self.n[c] / (self.n[c] - 1.0)
    }
}

fn class_stats(col: &[f64], y: &[u8]) -> ClassStats {
    let mut n = [0.0; 2];
    let mut sum = [0.0; 2];
    for (v, &l) in col.iter().zip(y) {
        n[l as usize] += 1.0;
        sum[l as usize] += v;
    }
    let mean = [sum[0] / n[0], sum[1] / n[1]];
    let mut ss = [0.0; 2];
    for (v, &l) in col.iter().zip(y) {
        ss[l as usize] += (v - mean[l as usize]).powi(2);
    }
    ClassStats {
        n,
        mean,
        pop_var: [ss[0] / n[0], ss[1] / n[1]],
        overall_mean: (sum[0] + sum[1]) / (n[0] + n[1]),
    }
}

fn per_column(data: &LabeledMatrix, f: impl Fn(&ClassStats) -> f64) -> Vec<f64> {
    (0..data.n_features()).map(|j| f(&class_stats(&data.column(j), &data.y))).collect()
}

/// Σ_c n_c (μ_c − μ)² / Σ_c n_c σ_c² with population variances.
pub fn fisher_scores(data: &LabeledMatrix) -> Vec<f64> {
    per_column(data, |s| {
        let between: f64 = (0..2).map(|c| s.n[c] * (s.mean[c] - s.overall_mean).powi(2)).sum();
        let within: f64 = (0..2).map(|c| s.n[c] * s.pop_var[c]).sum();
        between / within.max(DENOM_FLOOR)
    })
}

/// |μ⁺ − μ⁻| / sqrt(s⁺²/n⁺ + s⁻²/n⁻) with sample variances.
pub fn t_scores(data: &LabeledMatrix) -> Vec<f64> {
    per_column(data, |s| {
        let se = s.sample_var(1) / s.n[1] + s.sample_var(0) / s.n[0];
        (s.mean[1] - s.mean[0]).abs() / se.max(DENOM_FLOOR).sqrt()
    })
}

/// ((μ⁺ − μ)² + (μ⁻ − μ)²) / (s⁺² + s⁻²) with sample variances.
pub fn f_scores(data: &LabeledMatrix) -> Vec<f64> {
    per_column(data, |s| {
        let num = (s.mean[1] - s.overall_mean).powi(2) + (s.mean[0] - s.overall_mean).powi(2);
        num / (s.sample_var(1) + s.sample_var(0)).max(DENOM_FLOOR)
    })
}

fn gini_impurity(pos: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

/// Largest impurity reduction over thresholds placed between consecutive
/// distinct values of the column.
fn gini_gain(col: &[f64], y: &[u8]) -> f64 {
    let mut pairs: Vec<(f64, u8)> = col.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len() as f64;
    let total_pos = pairs.iter().filter(|p| p.1 == 1).count() as f64;
    let parent = gini_impurity(total_pos, n);
    let mut best_child = parent;
    let mut left_pos = 0.0;
    for i in 0..pairs.len() - 1 {
        left_pos += pairs[i].1 as f64;
        if pairs[i].0 == pairs[i + 1].0 {
            continue;
        }
        let nl = (i + 1) as f64;
        let nr = n - nl;
        let child = (nl / n) * gini_impurity(left_pos, nl) + (nr / n) * gini_impurity(total_pos - left_pos, nr);
        best_child = best_child.min(child);
    }
    parent - best_child
}

pub fn gini_scores(data: &LabeledMatrix) -> Vec<f64> {
    (0..data.n_features()).map(|j| gini_gain(&data.column(j), &data.y)).collect()
}

pub fn univariate_scores(data: &LabeledMatrix, method: RankMethod) -> Result<Vec<f64>> {
    let counts = data.class_counts();
    match method {
        RankMethod::Gini => Ok(gini_scores(data)),
        RankMethod::Fisher | RankMethod::TScore | RankMethod::FScore => {
            if counts.iter().any(|&c| c < 2) {
                return Err(Error::invalid("each class needs at least 2 rows"));
            }
            Ok(match method {
                RankMethod::Fisher => fisher_scores(data),
                RankMethod::TScore => t_scores(data),
                _ => f_scores(data),
            })
        }
        other => Err(Error::invalid(format!("{other} is not a univariate method"))),
    }
}
