use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnPrediction {
    pub label: u8,
    /// Fraction of the k neighbours labelled PD.
    pub score: f64,
}

/// Majority vote over the `k` nearest rows by Euclidean distance (ties by
/// row index). A split vote goes to the class of the single nearest row.
pub fn knn_predict(train_x: &[Vec<f64>], train_y: &[u8], x: &[f64], k: usize) -> Result<KnnPrediction> {
    if train_x.is_empty() {
        return Err(Error::invalid("kNN training set is empty"));
    }
    if train_x.len() != train_y.len() {
        return Err(Error::DimensionMismatch { expected: train_x.len(), got: train_y.len() });
    }
    if k == 0 || k > train_x.len() {
        return Err(Error::Config(format!("kNN k = {k} outside 1..={}", train_x.len())));
    }
    let d = train_x[0].len();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    let mut dist: Vec<(f64, usize)> = train_x
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let pd = dist[..k].iter().filter(|(_, i)| train_y[*i] == 1).count();
    let hc = k - pd;
    let label = match pd.cmp(&hc) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => 0,
        std::cmp::Ordering::Equal => train_y[dist[0].1],
    };
    Ok(KnnPrediction { label, score: pd as f64 / k as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> (Vec<Vec<f64>>, Vec<u8>) {
        (vec![vec![0.0], vec![1.0], vec![2.0], vec![10.0]], vec![1, 0, 1, 0])
    }

    #[test]
    fn nearest_neighbour() {
        let (x, y) = line();
        assert_eq!(knn_predict(&x, &y, &[0.9], 1).unwrap().label, 0);
        assert_eq!(knn_predict(&x, &y, &[9.0], 1).unwrap().label, 0);
    }

    #[test]
    fn three_votes() {
        let (x, y) = line();
        // neighbours of 1.4: 1.0 (HC), 2.0 (PD), 0.0 (PD)
        let p = knn_predict(&x, &y, &[1.4], 3).unwrap();
        assert_eq!(p.label, 1);
        assert!((p.score - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn split_vote_follows_nearest() {
        let (x, y) = line();
        let p = knn_predict(&x, &y, &[1.2], 2).unwrap();
        assert_eq!(p.label, 0);
        assert_eq!(p.score, 0.5);
    }

    #[test]
    fn k_equals_n_is_majority() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y = vec![1, 1, 1, 0, 0];
        for q in [-5.0, 0.0, 4.0, 100.0] {
            assert_eq!(knn_predict(&x, &y, &[q], 5).unwrap().label, 1);
        }
    }

    #[test]
    fn errors() {
        assert!(knn_predict(&[], &[], &[0.0], 1).is_err());
        let (x, y) = line();
        assert!(knn_predict(&x, &y, &[0.0], 5).is_err());
        assert!(knn_predict(&x, &y, &[0.0, 1.0], 1).is_err());
    }
}
