//! Short-time power spectra, mel filterbank and cepstral coefficients.
//!
//! The representation is fixed: a 2048-point periodic Hann window with a
//! 512-sample hop, 128 triangular mel filters between 0 Hz and 2 kHz, natural
//! log with a floor, an orthonormal DCT-II to 128 coefficients, and rows 5 to
//! 44 (one-indexed) kept.

mod delta;
mod mel;

pub use delta::delta;
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz};

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MFCC_ROWS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// One-indexed inclusive range of retained cepstral coefficients.
    pub coeff_first: usize,
    pub coeff_last: usize,
    pub log_floor: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            sample_rate: 48_000,
            window_len: 2048,
            hop: 512,
            n_mels: 128,
            n_mfcc: 128,
            fmin: 0.0,
            fmax: 2000.0,
            coeff_first: 5,
            coeff_last: 44,
            log_floor: 1e-10,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.window_len == 0 || self.hop * 4 != self.window_len {
            return bad(format!("hop ({}) must be window_len/4 ({})", self.hop, self.window_len / 4));
        }
        if self.coeff_first == 0 || self.coeff_last < self.coeff_first {
            return bad("coefficient range must be one-indexed and non-empty".into());
        }
        if self.coeff_last - self.coeff_first + 1 != MFCC_ROWS {
            return bad(format!("coefficient range must span exactly {MFCC_ROWS} coefficients"));
        }
        if self.coeff_last > self.n_mfcc || self.n_mfcc > self.n_mels {
            return bad("need coeff_last <= n_mfcc <= n_mels".into());
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.fmax > self.sample_rate as f64 / 2.0 {
            return bad(format!("fmax {} exceeds Nyquist {}", self.fmax, self.sample_rate as f64 / 2.0));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            return bad("need 0 <= fmin < fmax".into());
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// floor((len - window_len) / hop) + 1, or 0 for signals shorter than a window.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Power spectrogram stored frame-major: `frames[t][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub n_bins: usize,
    pub frames: Vec<Vec<f64>>,
}

/// Reusable STFT/MFCC engine holding the FFT plan, window, mel weights and
/// the DCT rows that survive coefficient selection.
pub struct MfccExtractor {
    config: DspConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filterbank: Vec<Vec<f64>>,
    dct_rows: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub fn new(config: DspConfig) -> Result<Self> {
        config.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(config.window_len);
        let window = hann_periodic(config.window_len);
        let filterbank = mel_filterbank(&config);
        let n = config.n_mels as f64;
        let dct_rows = (config.coeff_first - 1..config.coeff_last)
            .map(|k| {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                (0..config.n_mels).map(|i| scale * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos()).collect()
            })
            .collect();
        Ok(MfccExtractor { config, fft, window, filterbank, dct_rows })
    }

    pub fn config(&self) -> &DspConfig {
        &self.config
    }

    pub fn stft_power(&self, samples: &[f64]) -> Result<PowerSpectrogram> {
        let cfg = &self.config;
        if samples.len() < cfg.window_len {
            return Err(Error::invalid(format!(
                "signal of {} samples is shorter than one {}-sample window",
                samples.len(),
                cfg.window_len
            )));
        }
        let n_frames = cfg.frame_count(samples.len());
        let n_bins = cfg.n_bins();
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.window_len];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let frames = (0..n_frames)
            .map(|t| {
                let start = t * cfg.hop;
                for (i, c) in buf.iter_mut().enumerate() {
                    *c = Complex::new(samples[start + i] * self.window[i], 0.0);
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                buf[..n_bins].iter().map(|c| c.norm_sqr()).collect()
            })
            .collect();
        Ok(PowerSpectrogram { n_bins, frames })
    }

    /// Log mel energies per frame (`n_mels` values each).
    pub fn log_mel(&self, spec: &PowerSpectrogram) -> Vec<Vec<f64>> {
        spec.frames
            .iter()
            .map(|frame| {
                self.filterbank
                    .iter()
                    .map(|w| {
                        let e: f64 = w.iter().zip(frame).map(|(a, b)| a * b).sum();
                        e.max(self.config.log_floor).ln()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn mfcc(&self, samples: &[f64]) -> Result<MfccMatrix> {
        let spec = self.stft_power(samples)?;
        let logmel = self.log_mel(&spec);
        let n = logmel.len();
        let mut data = vec![0.0; MFCC_ROWS * n];
        for (t, col) in logmel.iter().enumerate() {
            for (r, basis) in self.dct_rows.iter().enumerate() {
                data[r * n + t] = basis.iter().zip(col).map(|(a, b)| a * b).sum();
            }
        }
        MfccMatrix::from_row_major(n, data)
    }
}

pub fn stft_power(samples: &[f64], config: &DspConfig) -> Result<PowerSpectrogram> {
    MfccExtractor::new(config.clone())?.stft_power(samples)
}

pub fn mfcc(samples: &[f64], config: &DspConfig) -> Result<MfccMatrix> {
    MfccExtractor::new(config.clone())?.mfcc(samples)
}

/// 40 x n matrix of selected cepstral coefficients, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccMatrix {
    n_frames: usize,
    data: Vec<f64>,
}

impl MfccMatrix {
    pub fn from_row_major(n_frames: usize, data: Vec<f64>) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::invalid("MFCC matrix needs at least one frame"));
        }
        if data.len() != MFCC_ROWS * n_frames {
            return Err(Error::DimensionMismatch { expected: MFCC_ROWS * n_frames, got: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("MFCC matrix has non-finite entries"));
        }
        Ok(MfccMatrix { n_frames, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != MFCC_ROWS {
            return Err(Error::DimensionMismatch { expected: MFCC_ROWS, got: rows.len() });
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("ragged MFCC rows"));
        }
        Self::from_row_major(n, rows.concat())
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_frames..(r + 1) * self.n_frames]
    }

    pub fn get(&self, r: usize, t: usize) -> f64 {
        self.data[r * self.n_frames + t]
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..MFCC_ROWS).map(|r| self.get(r, t)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, len: usize) -> Vec<f64> {
        (0..len).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 48000.0).sin()).collect()
    }

    #[test]
    fn silence_frame_count_and_zero_power() {
        let spec = stft_power(&vec![0.0; 48000], &DspConfig::default()).unwrap();
        assert_eq!(spec.frames.len(), 90);
        assert_eq!(spec.n_bins, 1025);
        assert!(spec.frames.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_window_signal() {
        let spec = stft_power(&vec![0.1; 2048], &DspConfig::default()).unwrap();
        assert_eq!(spec.frames.len(), 1);
        assert!(stft_power(&vec![0.1; 2047], &DspConfig::default()).is_err());
    }

    #[test]
    fn impulse_power() {
        let cfg = DspConfig::default();
        let mut x = vec![0.0; 2048];
        x[0] = 1.0;
        let spec = stft_power(&x, &cfg).unwrap();
        assert!(spec.frames[0].iter().all(|&v| v.abs() < 1e-24));
        let mut x = vec![0.0; 2048];
        x[1024] = 1.0;
        let spec = stft_power(&x, &cfg).unwrap();
        assert!(spec.frames[0].iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = DspConfig::default();
        let x: Vec<f64> = (0..6000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect();
        let spec = stft_power(&x, &cfg).unwrap();
        let w = hann_periodic(2048);
        for (t, frame) in spec.frames.iter().enumerate() {
            let energy: f64 = (0..2048).map(|i| (x[t * 512 + i] * w[i]).powi(2)).sum();
            let last = frame.len() - 1;
            let doubled: f64 = frame[0] + frame[last] + 2.0 * frame[1..last].iter().sum::<f64>();
            assert!(((doubled / 2048.0) - energy).abs() <= 1e-6 * energy);
        }
    }

    #[test]
    fn silence_columns_equal_dct_of_floor() {
        let cfg = DspConfig::default();
        let m = mfcc(&vec![0.0; 48000], &cfg).unwrap();
        assert_eq!(m.n_frames(), 90);
        // DCT of a constant vector has no energy outside coefficient 0
        for t in 0..m.n_frames() {
            assert_eq!(m.column(t), m.column(0));
            assert!(m.column(t).iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn exactly_periodic_tone_gives_identical_columns() {
        // 375 Hz completes exactly four periods per 512-sample hop
        let m = mfcc(&sine(375.0, 48000), &DspConfig::default()).unwrap();
        for t in 2..m.n_frames() - 2 {
            for r in 0..MFCC_ROWS {
                assert!((m.get(r, t) - m.get(r, 2)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn distinct_tones_give_distinct_cepstra() {
        let cfg = DspConfig::default();
        let mean_col = |m: &MfccMatrix| -> Vec<f64> {
            (0..MFCC_ROWS).map(|r| m.row(r).iter().sum::<f64>() / m.n_frames() as f64).collect()
        };
        let a = mean_col(&mfcc(&sine(300.0, 24000), &cfg).unwrap());
        let b = mean_col(&mfcc(&sine(1500.0, 24000), &cfg).unwrap());
        let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(dist > 1.0);
    }

    #[test]
    fn default_config_has_empty_low_filters() {
        let empty = mel_filterbank(&DspConfig::default()).iter().filter(|w| w.iter().all(|v| *v == 0.0)).count();
        assert_eq!(empty, 10);
    }

    #[test]
    fn rescaling_only_moves_the_dc_cepstrum_when_filters_are_populated() {
        // 8192-point frames put at least one bin inside every mel filter
        let cfg = DspConfig { window_len: 8192, hop: 2048, ..DspConfig::default() };
        assert!(mel_filterbank(&cfg).iter().all(|w| w.iter().any(|v| *v > 0.0)));
        let x: Vec<f64> = (0..20000u64)
            .map(|i| ((i.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407) >> 33) % 2000) as f64 / 4000.0 - 0.25)
            .collect();
        let scaled: Vec<f64> = x.iter().map(|v| v * 0.37).collect();
        let (a, b) = (mfcc(&x, &cfg).unwrap(), mfcc(&scaled, &cfg).unwrap());
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((u - v).abs() < 1e-5);
        }
    }

    #[test]
    fn config_validation() {
        let ok = DspConfig::default();
        assert!(ok.validate().is_ok());
        assert!(DspConfig { fmax: 30000.0, ..ok.clone() }.validate().is_err());
        assert!(DspConfig { hop: 500, ..ok.clone() }.validate().is_err());
        assert!(DspConfig { coeff_last: 45, ..ok.clone() }.validate().is_err());
        assert!(DspConfig { n_mfcc: 40, ..ok }.validate().is_err());
    }

    #[test]
    fn matrix_shape_checks() {
        assert!(MfccMatrix::from_row_major(0, vec![]).is_err());
        assert!(MfccMatrix::from_row_major(2, vec![0.0; 79]).is_err());
        assert!(MfccMatrix::from_row_major(1, vec![f64::NAN; 40]).is_err());
        let m = MfccMatrix::from_row_major(2, (0..80).map(|v| v as f64).collect()).unwrap();
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.column(1)[39], 79.0);
    }
}
