use super::LabeledMatrix;
use crate::error::{Error, Result};

/// ReliefF with every row used once as the anchor.
///
/// Features are min–max scaled, neighbours are found by Manhattan distance
/// (ties by row index), and each anchor contributes
/// `(prior-weighted miss diff − hit diff) / (N·k)` per feature. With two
/// classes the miss prior weight `P(other) / (1 − P(own))` is exactly 1.
pub fn relieff_scores(data: &LabeledMatrix, k: usize) -> Result<Vec<f64>> {
    let counts = data.class_counts();
    if k == 0 {
        return Err(Error::invalid("ReliefF needs k >= 1"));
    }
    if counts.iter().any(|&c| c < k + 1) {
        return Err(Error::invalid(format!(
            "ReliefF k = {k} too large for class sizes {counts:?} (need k + 1 rows per class)"
        )));
    }
    let n = data.n_rows();
    let d = data.n_features();

    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in &data.x {
        for j in 0..d {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    let scaled: Vec<Vec<f64>> = data
        .x
        .iter()
        .map(|row| {
            (0..d)
                .map(|j| {
                    let range = hi[j] - lo[j];
                    if range > 0.0 {
                        (row[j] - lo[j]) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let manhattan = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum() };

    let mut weights = vec![0.0; d];
    let norm = (n * k) as f64;
    for anchor in 0..n {
        let own = data.y[anchor] as usize;
        let mut by_dist: Vec<(f64, usize)> =
            (0..n).filter(|&i| i != anchor).map(|i| (manhattan(&scaled[anchor], &scaled[i]), i)).collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let hits = by_dist.iter().filter(|(_, i)| data.y[*i] as usize == own).take(k);
        let misses: Vec<usize> =
            by_dist.iter().filter(|(_, i)| data.y[*i] as usize != own).take(k).map(|(_, i)| *i).collect();
        let prior = counts[1 - own] as f64 / (n - counts[own]) as f64;
        for (_, h) in hits {
            for j in 0..d {
                weights[j] -= (scaled[anchor][j] - scaled[*h][j]).abs() / norm;
            }
        }
        for m in misses {
            for j in 0..d {
                weights[j] += prior * (scaled[anchor][j] - scaled[m][j]).abs() / norm;
            }
        }
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent enumeration: for each anchor scan all rows, keep the
    /// nearest same-class and other-class row (k = 1, one feature).
    fn enumerate_k1(values: &[f64], labels: &[u8]) -> f64 {
        let range = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
        let n = values.len();
        let mut total = 0.0;
        for a in 0..n {
            let mut hit = f64::INFINITY;
            let mut miss = f64::INFINITY;
            for b in 0..n {
                if a == b {
                    continue;
                }
                let diff = (values[a] - values[b]).abs() / range;
                if labels[a] == labels[b] {
                    hit = hit.min(diff);
                } else {
                    miss = miss.min(diff);
                }
            }
            total += miss - hit;
        }
        total / n as f64
    }

    #[test]
    fn one_dimensional_enumeration() {
        let values = [0.0, 0.1, 1.0, 1.1];
        let labels = [0, 0, 1, 1];
        let data = LabeledMatrix::ungrouped(values.iter().map(|v| vec![*v]).collect(), labels.to_vec()).unwrap();
        let w = relieff_scores(&data, 1).unwrap()[0];
        let oracle = enumerate_k1(&values, &labels);
        assert!((w - oracle).abs() < 1e-12);
        // nearest misses sit 1.0, 0.9, 0.9, 1.0 away and every hit 0.1 away
        assert!((w - 0.85 / 1.1).abs() < 1e-6);
    }

    #[test]
    fn constant_feature_is_zero() {
        let data = LabeledMatrix::ungrouped(
            (0..8).map(|i| vec![3.0, i as f64]).collect(),
            vec![0, 0, 0, 0, 1, 1, 1, 1],
        )
        .unwrap();
        let w = relieff_scores(&data, 2).unwrap();
        assert_eq!(w[0], 0.0);
        assert!(w[1] > 0.0);
    }

    #[test]
    fn k_too_large() {
        let data = LabeledMatrix::ungrouped((0..6).map(|i| vec![i as f64]).collect(), vec![0, 0, 0, 1, 1, 1]).unwrap();
        assert!(relieff_scores(&data, 3).is_err());
        assert!(relieff_scores(&data, 2).is_ok());
    }

    #[test]
    fn weights_bounded() {
        let data = super::super::testdata::planted(60, 12, 3, 2.0, 5);
        for w in relieff_scores(&data, 10).unwrap() {
            assert!((-1.0..=1.0).contains(&w));
        }
    }

    #[test]
    fn shuffled_labels_average_to_zero() {
        let base = super::super::testdata::planted(60, 5, 5, 2.0, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut total = 0.0;
        for _ in 0..100 {
            let mut y = base.y.clone();
            y.shuffle(&mut rng);
            let data = LabeledMatrix::ungrouped(base.x.clone(), y).unwrap();
            total += relieff_scores(&data, 10).unwrap().iter().sum::<f64>() / 5.0;
        }
        let mean = total / 100.0;
        assert!(mean.abs() < 0.05, "mean null weight {mean}");
    }
}
