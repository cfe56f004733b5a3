use super::LabeledMatrix;
use crate::error::{Error, Result};

const LAMBDA_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const SCATTER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRatioResult {
    /// `b_i − λ·w_i` at the converged λ.
    pub scores: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    /// Per-feature between-class and within-class scatter.
    pub between: Vec<f64>,
    pub within: Vec<f64>,
}

/// Top `m` indices of `scores`, ties by ascending index.
fn top_m(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// Diagonal trace-ratio feature scores: alternate between selecting the
/// `m_target` features with the largest `b_i − λ w_i` and updating
/// `λ = Σ b / Σ w` over the selection, until λ stops moving.
pub fn trace_ratio_scores(data: &LabeledMatrix, m_target: usize) -> Result<TraceRatioResult> {
    let d = data.n_features();
    if m_target == 0 || m_target > d {
        return Err(Error::invalid(format!("trace ratio subset size {m_target} outside 1..={d}")));
    }
    let counts = data.class_counts();
    let mut between = vec![0.0; d];
    let mut within = vec![0.0; d];
    for j in 0..d {
        let col = data.column(j);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        for c in 0..2u8 {
            let members: Vec<f64> = col.iter().zip(&data.y).filter(|(_, &l)| l == c).map(|(v, _)| *v).collect();
            let mu = members.iter().sum::<f64>() / members.len() as f64;
            between[j] += counts[c as usize] as f64 * (mu - mean).powi(2);
            within[j] += members.iter().map(|v| (v - mu).powi(2)).sum::<f64>();
        }
    }

    let ratio = |sel: &[usize]| {
        let b: f64 = sel.iter().map(|&i| between[i]).sum();
        let w: f64 = sel.iter().map(|&i| within[i]).sum();
        b / w.max(SCATTER_FLOOR)
    };
    let score = |lambda: f64| -> Vec<f64> { (0..d).map(|i| between[i] - lambda * within[i]).collect() };

    let mut lambda = 0.0;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let next = ratio(&top_m(&score(lambda), m_target));
        let done = (next - lambda).abs() < LAMBDA_TOL;
        lambda = next;
        if done {
            break;
        }
    }
    Ok(TraceRatioResult { scores: score(lambda), lambda, iterations, between, within })
}

#[cfg(test)]
mod tests {
    use super::super::{fisher_scores, testdata::planted};
    use super::*;

    #[test]
    fn single_feature_target_picks_best_ratio() {
        let data = planted(80, 30, 4, 1.0, 2);
        let r = trace_ratio_scores(&data, 1).unwrap();
        let best = top_m(&r.scores, 1)[0];
        // brute force over every single-feature ratio
        let brute = (0..30)
            .max_by(|&a, &b| (r.between[a] / r.within[a]).total_cmp(&(r.between[b] / r.within[b])))
            .unwrap();
        assert_eq!(best, brute);
        let fisher = fisher_scores(&data);
        let fisher_best = (0..30).max_by(|&a, &b| fisher[a].total_cmp(&fisher[b])).unwrap();
        assert_eq!(best, fisher_best);
    }

    #[test]
    fn identical_columns_tie() {
        let base = planted(20, 1, 1, 1.0, 4);
        let x: Vec<Vec<f64>> = base.x.iter().map(|r| vec![r[0]; 6]).collect();
        let data = LabeledMatrix::ungrouped(x, base.y.clone()).unwrap();
        let r = trace_ratio_scores(&data, 3).unwrap();
        assert!(r.iterations <= 2);
        assert!(r.scores.iter().all(|s| *s == r.scores[0]));
        assert_eq!(top_m(&r.scores, 6), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn converged_lambda_is_a_fixed_point() {
        let data = planted(100, 60, 8, 1.2, 8);
        for m in [1, 5, 20, 60] {
            let r = trace_ratio_scores(&data, m).unwrap();
            let sel = top_m(&r.scores, m);
            let residual: f64 = sel.iter().map(|&i| r.between[i] - r.lambda * r.within[i]).sum();
            assert!(residual.abs() < 1e-6, "m={m}: {residual}");
        }
    }

    #[test]
    fn bad_subset_size() {
        let data = planted(10, 3, 1, 1.0, 1);
        assert!(trace_ratio_scores(&data, 0).is_err());
        assert!(trace_ratio_scores(&data, 4).is_err());
    }
}
