//! Six-layer CNN over 40×40 MFCC windows, with explicit forward and
//! backward passes and Adam training.

mod checkpoint;
mod cnn;
pub mod layers;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use cnn::{
    backward, cnn_forward, forward, loss_and_grad, shape_trace, CnnParams, ForwardCache, Mode, CONV_CHANNELS,
    DROPOUT_P, FC1, FC2, PARAMETER_COUNT,
};
pub use layers::Tensor;
pub use train::{accuracy, balanced_accuracy, cnn_train, predict_sample_probs, Adam, EpochRecord, TrainConfig, TrainOutcome};

use crate::dsp::{MfccMatrix, MFCC_ROWS};
use crate::error::{Error, Result};

/// Window width in frames; equal to the number of MFCC rows.
pub const WINDOW: usize = 40;
/// Hop between consecutive windows (75 % overlap).
pub const STRIDE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow {
    /// Row-major 40 × 40: coefficient rows, frame columns.
    pub values: Vec<f64>,
    /// Index of the parent segment.
    pub segment: usize,
    /// First frame of the window.
    pub offset: usize,
}

impl SampleWindow {
    pub fn new(values: Vec<f64>, segment: usize, offset: usize) -> Result<Self> {
        if values.len() != WINDOW * WINDOW {
            return Err(Error::DimensionMismatch { expected: WINDOW * WINDOW, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample window contains non-finite values"));
        }
        Ok(SampleWindow { values, segment, offset })
    }
}

pub fn window_count(n_frames: usize) -> usize {
    if n_frames < WINDOW {
        0
    } else {
        (n_frames - WINDOW) / STRIDE + 1
    }
}

/// Cuts 40-frame windows every 10 frames. Matrices shorter than one window
/// yield nothing.
pub fn window_samples(mfcc: &MfccMatrix, segment: usize) -> Vec<SampleWindow> {
    debug_assert_eq!(MFCC_ROWS, WINDOW);
    (0..window_count(mfcc.n_frames()))
        .map(|k| {
            let offset = k * STRIDE;
            let mut values = Vec::with_capacity(WINDOW * WINDOW);
            for r in 0..MFCC_ROWS {
                values.extend_from_slice(&mfcc.row(r)[offset..offset + WINDOW]);
            }
            SampleWindow { values, segment, offset }
        })
        .collect()
}

/// Stacks windows into an (n, 1, 40, 40) tensor.
pub fn windows_to_tensor<'a>(windows: impl IntoIterator<Item = &'a SampleWindow>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut n = 0;
    for w in windows {
        if w.values.len() != WINDOW * WINDOW {
            return Err(Error::DimensionMismatch { expected: WINDOW * WINDOW, got: w.values.len() });
        }
        data.extend_from_slice(&w.values);
        n += 1;
    }
    Tensor::from_vec([n, 1, WINDOW, WINDOW], data)
}

/// Per-coefficient-row mean and standard deviation of a set of windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl WindowScaler {
    /// Rows with a standard deviation below `1e-12` are only centered.
    pub fn fit(windows: &[SampleWindow]) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::invalid("cannot fit a window scaler on no windows"));
        }
        let mut sum = vec![0.0; WINDOW];
        for w in windows {
            for (r, row) in w.values.chunks(WINDOW).enumerate() {
                sum[r] += row.iter().sum::<f64>();
            }
        }
        let n = (windows.len() * WINDOW) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut sq = vec![0.0; WINDOW];
        for w in windows {
            for (r, row) in w.values.chunks(WINDOW).enumerate() {
                sq[r] += row.iter().map(|v| (v - mean[r]).powi(2)).sum::<f64>();
            }
        }
        let std = sq.iter().map(|s| (s / n).sqrt()).map(|s| if s < 1e-12 { 1.0 } else { s }).collect();
        Ok(WindowScaler { mean, std })
    }

    pub fn apply(&self, window: &SampleWindow) -> SampleWindow {
        let mut values = window.values.clone();
        for (r, row) in values.chunks_mut(WINDOW).enumerate() {
            row.iter_mut().for_each(|v| *v = (*v - self.mean[r]) / self.std[r]);
        }
        SampleWindow { values, segment: window.segment, offset: window.offset }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize) -> MfccMatrix {
        let rows: Vec<Vec<f64>> = (0..MFCC_ROWS).map(|r| (0..n).map(|t| (r * 1000 + t) as f64).collect()).collect();
        MfccMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_count(40), 1);
        assert_eq!(window_count(50), 2);
        assert_eq!(window_count(39), 0);
    }

    #[test]
    fn scaler_standardizes_rows() {
        let ws = window_samples(&matrix(60), 0);
        let scaler = WindowScaler::fit(&ws).unwrap();
        let scaled: Vec<SampleWindow> = ws.iter().map(|w| scaler.apply(w)).collect();
        let refit = WindowScaler::fit(&scaled).unwrap();
        assert!(refit.mean.iter().all(|m| m.abs() < 1e-9));
        assert!(refit.std.iter().all(|s| (s - 1.0).abs() < 1e-9));
        assert_eq!(window_count(90), 6);
    }

    #[test]
    fn windows_slice_the_matrix() {
        let ws = window_samples(&matrix(50), 7);
        assert_eq!(ws.iter().map(|w| w.offset).collect::<Vec<_>>(), vec![0, 10]);
        assert!(ws.iter().all(|w| w.segment == 7));
        // row 3, column 5 of the second window is frame 15 of coefficient row 3
        assert_eq!(ws[1].values[3 * WINDOW + 5], 3015.0);
        assert!(window_samples(&matrix(39), 0).is_empty());
    }

    #[test]
    fn window_validation() {
        assert!(SampleWindow::new(vec![0.0; 1599], 0, 0).is_err());
        assert!(SampleWindow::new(vec![f64::NAN; 1600], 0, 0).is_err());
        assert!(SampleWindow::new(vec![0.0; 1600], 0, 0).is_ok());
    }
}
