//! Fixed-length statistics vectors and per-fold standardization.
//!
//! Layout: `index = order * 160 + slot * 4 + stat` with derivative order in
//! 0..3, coefficient slot in 0..40 and stat in {mean, std, skew, kurtosis}.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dsp::{delta, MfccMatrix, DspConfig, MFCC_ROWS};
use crate::error::{Error, Result};

pub const N_FEATURES: usize = 480;
pub const N_STATS: usize = 4;
pub const N_ORDERS: usize = 3;
pub const STAT_NAMES: [&str; N_STATS] = ["mean", "std", "skew", "kurt"];

const DEGENERATE_M2: f64 = 1e-24;
const STD_FLOOR: f64 = 1e-12;

pub fn feature_index(order: usize, slot: usize, stat: usize) -> usize {
    order * MFCC_ROWS * N_STATS + slot * N_STATS + stat
}

/// Inverse of [`feature_index`].
pub fn feature_parts(index: usize) -> (usize, usize, usize) {
    (index / (MFCC_ROWS * N_STATS), (index / N_STATS) % MFCC_ROWS, index % N_STATS)
}

/// Human-readable column name, e.g. `d1_c12_std` for the std of the first
/// derivative of cepstral coefficient 12 (one-indexed, as in the DSP config).
pub fn feature_name(index: usize, dsp: &DspConfig) -> String {
    let (order, slot, stat) = feature_parts(index);
    format!("d{order}_c{}_{}", dsp.coeff_first + slot, STAT_NAMES[stat])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub skew: f64,
    pub kurt: f64,
}

/// Population mean, standard deviation, skewness and excess kurtosis.
pub fn segment_statistics(row: &[f64]) -> Moments {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in row {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 < DEGENERATE_M2 {
        return Moments { mean, std: m2.sqrt(), skew: 0.0, kurt: 0.0 };
    }
    Moments { mean, std: m2.sqrt(), skew: m3 / m2.powf(1.5), kurt: m4 / (m2 * m2) - 3.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != N_FEATURES {
            return Err(Error::DimensionMismatch { expected: N_FEATURES, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature {i} is not finite")));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn build_feature_vector(mfcc: &MfccMatrix) -> FeatureVector {
    let mut values = vec![0.0; N_FEATURES];
    let orders = [mfcc.clone(), delta(mfcc, 1), delta(mfcc, 2)];
    for (order, m) in orders.iter().enumerate() {
        for slot in 0..MFCC_ROWS {
            let s = segment_statistics(m.row(slot));
            for (stat, v) in [s.mean, s.std, s.skew, s.kurt].into_iter().enumerate() {
                values[feature_index(order, slot, stat)] = v;
            }
        }
    }
    FeatureVector::new(values).expect("finite statistics of a finite matrix")
}

/// Per-column affine standardization fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid(format!("standardizer needs at least 2 rows, got {}", rows.len())));
        }
        let d = rows[0].len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Standardizer { mean, std })
    }

    /// Columns whose fitted std sits at the floor map to 0 for every row.
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s <= STD_FLOOR { 0.0 } else { (v - m) / s })
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

pub fn fit_standardizer(rows: &[Vec<f64>]) -> Result<Standardizer> {
    Standardizer::fit(rows)
}

pub fn apply_standardizer(s: &Standardizer, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    s.transform(rows)
}

/// Writes one row per segment: `id` columns first, then the 480 features in
/// canonical order.
pub fn write_feature_csv<W: Write>(
    out: W,
    id_header: &[&str],
    ids: &[Vec<String>],
    rows: &[FeatureVector],
    dsp: &DspConfig,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> =
        id_header.iter().map(|s| s.to_string()).chain((0..N_FEATURES).map(|i| feature_name(i, dsp))).collect();
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(rows) {
        let record: Vec<String> = id.iter().cloned().chain(row.as_slice().iter().map(|v| format!("{v:e}"))).collect();
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("feature csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_row_statistics() {
        assert_eq!(segment_statistics(&[1.0; 4]), Moments { mean: 1.0, std: 0.0, skew: 0.0, kurt: 0.0 });
    }

    #[test]
    fn ramp_statistics() {
        let s = segment_statistics(&[1.0, 2.0, 3.0, 4.0]);
        assert!((s.mean - 2.5).abs() < 1e-12);
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-12);
        assert!(s.skew.abs() < 1e-12);
        assert!((s.kurt - (2.5625 / 1.5625 - 3.0)).abs() < 1e-12);
        assert!((s.kurt + 1.36).abs() < 1e-12);
    }

    #[test]
    fn single_value_row() {
        let s = segment_statistics(&[4.2]);
        assert_eq!((s.mean, s.std, s.skew, s.kurt), (4.2, 0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_matrix_features() {
        let m = MfccMatrix::from_row_major(10, vec![3.0; 400]).unwrap();
        let v = build_feature_vector(&m);
        assert_eq!(v.as_slice().len(), N_FEATURES);
        for (i, x) in v.as_slice().iter().enumerate() {
            let (order, _, stat) = feature_parts(i);
            let expected = if order == 0 && stat == 0 { 3.0 } else { 0.0 };
            assert_eq!(*x, expected, "index {i}");
        }
    }

    #[test]
    fn layout_is_bijective() {
        for i in 0..N_FEATURES {
            let (o, c, s) = feature_parts(i);
            assert_eq!(feature_index(o, c, s), i);
        }
        assert_eq!(feature_parts(479), (2, 39, 3));
        assert_eq!(feature_name(479, &DspConfig::default()), "d2_c44_kurt");
    }

    #[test]
    fn standardizer_constant_column_and_centering() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![8.0, 5.0]];
        let s = fit_standardizer(&rows).unwrap();
        let t = apply_standardizer(&s, &rows);
        assert!(t.iter().all(|r| r[1] == 0.0));
        let mean: f64 = t.iter().map(|r| r[0]).sum::<f64>() / 3.0;
        let var: f64 = t.iter().map(|r| r[0] * r[0]).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn held_out_row_uses_training_statistics() {
        // train column: {0, 2} -> mean 1, std 1. Test row 5 -> 4, not 0.
        let s = fit_standardizer(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(s.transform_row(&[5.0]), vec![4.0]);
    }

    #[test]
    fn standardizer_needs_two_rows() {
        assert!(fit_standardizer(&[vec![1.0]]).is_err());
        assert!(fit_standardizer(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn feature_vector_length_checked() {
        assert!(FeatureVector::new(vec![0.0; 479]).is_err());
        let mut v = vec![0.0; 480];
        v[3] = f64::INFINITY;
        assert!(FeatureVector::new(v).is_err());
    }

    proptest! {
        #[test]
        fn mirrored_row_has_zero_skew(half in prop::collection::vec(-10.0f64..10.0, 1..20), c in -5.0f64..5.0) {
            let row: Vec<f64> = half.iter().map(|d| c + d).chain(half.iter().map(|d| c - d)).collect();
            prop_assert!(segment_statistics(&row).skew.abs() < 1e-9);
        }

        #[test]
        fn column_shuffle_keeps_static_statistics(n in 2usize..30, seed in any::<u64>()) {
            let data: Vec<f64> = (0..40 * n).map(|i| (((i as u64).wrapping_mul(2654435761) ^ seed) % 1000) as f64 / 100.0).collect();
            let m = MfccMatrix::from_row_major(n, data).unwrap();
            // reverse the time axis
            let rows: Vec<Vec<f64>> = (0..40).map(|r| m.row(r).iter().rev().cloned().collect()).collect();
            let shuffled = MfccMatrix::from_rows(&rows).unwrap();
            let (a, b) = (build_feature_vector(&m), build_feature_vector(&shuffled));
            for i in 0..160 {
                let (x, y) = (a.as_slice()[i], b.as_slice()[i]);
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "index {}", i);
            }
        }

        #[test]
        fn standardize_twice_is_idempotent(rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 2..15)) {
            let s = fit_standardizer(&rows).unwrap();
            let once = s.transform(&rows);
            let twice = fit_standardizer(&once).unwrap().transform(&once);
            for (a, b) in once.iter().flatten().zip(twice.iter().flatten()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
